//! Continuous nonlinear problem data: running cost `f(x) + g(u)`, dynamics
//! `x' = h(x, u)`, initial state, optional terminal rows `E x(tf) = e_f`, and
//! pointwise control bounds `alpha(t) <= u <= beta(t)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::trajectory::Trajectory;

pub type StateCostFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type StateGradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type StateHessFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ControlFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type DynFn = Arc<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
pub type DynJacXFn = Arc<dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync>;
pub type DynJacUFn = Arc<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
pub type BoundFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The continuous control-constrained problem. Immutable once built; all
/// callbacks must be pure.
#[derive(Clone)]
pub struct NlpProblem {
    state_dim: usize,
    grid: TimeGrid,
    pub f_eval: StateCostFn,
    pub f_grad: StateGradFn,
    pub f_hess: StateHessFn,
    pub g_eval: ControlFn,
    pub g_d1: ControlFn,
    pub g_d2: ControlFn,
    pub g_d3: Option<ControlFn>,
    pub h_eval: DynFn,
    pub h_jac_x: DynJacXFn,
    pub h_jac_u: DynJacUFn,
    x0: DVector<f64>,
    terminal_matrix: DMatrix<f64>,
    terminal_value: DVector<f64>,
    pub alpha: BoundFn,
    pub beta: BoundFn,
}

impl std::fmt::Debug for NlpProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NlpProblem")
            .field("state_dim", &self.state_dim)
            .field("grid", &self.grid)
            .field("terminal_rows", &self.terminal_matrix.nrows())
            .finish_non_exhaustive()
    }
}

impl NlpProblem {
    pub fn builder(state_dim: usize, grid: TimeGrid) -> NlpProblemBuilder {
        NlpProblemBuilder::new(state_dim, grid)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    /// Terminal rows `E`; zero rows encode an unconstrained terminal state.
    pub fn terminal_matrix(&self) -> &DMatrix<f64> {
        &self.terminal_matrix
    }

    pub fn terminal_value(&self) -> &DVector<f64> {
        &self.terminal_value
    }

    pub fn has_terminal_constraint(&self) -> bool {
        self.terminal_matrix.nrows() > 0
    }

    /// Bounds sampled at node `i` of the problem grid.
    pub fn bounds_at_node(&self, i: usize) -> (f64, f64) {
        let t = self.grid.node_time(i);
        ((self.alpha)(t), (self.beta)(t))
    }
}

pub struct NlpProblemBuilder {
    state_dim: usize,
    grid: TimeGrid,
    f_eval: Option<StateCostFn>,
    f_grad: Option<StateGradFn>,
    f_hess: Option<StateHessFn>,
    g_eval: Option<ControlFn>,
    g_d1: Option<ControlFn>,
    g_d2: Option<ControlFn>,
    g_d3: Option<ControlFn>,
    h_eval: Option<DynFn>,
    h_jac_x: Option<DynJacXFn>,
    h_jac_u: Option<DynJacUFn>,
    x0: Option<DVector<f64>>,
    terminal: Option<(DMatrix<f64>, DVector<f64>)>,
    alpha: BoundFn,
    beta: BoundFn,
    skip_derivative_check: bool,
}

impl NlpProblemBuilder {
    fn new(state_dim: usize, grid: TimeGrid) -> Self {
        NlpProblemBuilder {
            state_dim,
            grid,
            f_eval: None,
            f_grad: None,
            f_hess: None,
            g_eval: None,
            g_d1: None,
            g_d2: None,
            g_d3: None,
            h_eval: None,
            h_jac_x: None,
            h_jac_u: None,
            x0: None,
            terminal: None,
            alpha: Arc::new(|_| f64::NEG_INFINITY),
            beta: Arc::new(|_| f64::INFINITY),
            skip_derivative_check: false,
        }
    }

    pub fn state_cost(
        mut self,
        f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        hess: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.f_eval = Some(Arc::new(f));
        self.f_grad = Some(Arc::new(grad));
        self.f_hess = Some(Arc::new(hess));
        self
    }

    pub fn control_cost(
        mut self,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.g_eval = Some(Arc::new(g));
        self.g_d1 = Some(Arc::new(d1));
        self.g_d2 = Some(Arc::new(d2));
        self
    }

    /// Third derivative of `g`; only needed by the curvature diagnostic.
    pub fn control_cost_d3(mut self, d3: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.g_d3 = Some(Arc::new(d3));
        self
    }

    pub fn dynamics(
        mut self,
        h: impl Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        jac_x: impl Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
        jac_u: impl Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.h_eval = Some(Arc::new(h));
        self.h_jac_x = Some(Arc::new(jac_x));
        self.h_jac_u = Some(Arc::new(jac_u));
        self
    }

    pub fn initial_state(mut self, x0: DVector<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn terminal_constraint(mut self, e: DMatrix<f64>, e_f: DVector<f64>) -> Self {
        self.terminal = Some((e, e_f));
        self
    }

    /// Constant bounds; use `f64::NEG_INFINITY` / `f64::INFINITY` for one-sided
    /// or absent bounds.
    pub fn constant_bounds(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = Arc::new(move |_| alpha);
        self.beta = Arc::new(move |_| beta);
        self
    }

    pub fn bounds(
        mut self,
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.alpha = Arc::new(alpha);
        self.beta = Arc::new(beta);
        self
    }

    /// Disables the finite-difference consistency check. Intended for
    /// derivative callbacks that are themselves produced by automatic
    /// differentiation.
    pub fn trust_derivatives(mut self) -> Self {
        self.skip_derivative_check = true;
        self
    }

    pub fn build(self) -> Result<NlpProblem> {
        let n = self.state_dim;
        if n == 0 {
            return Err(Error::InvalidProblem("state dimension must be positive".into()));
        }
        let missing = |what: &str| Error::InvalidProblem(format!("missing {what}"));
        let f_eval = self.f_eval.ok_or_else(|| missing("state cost"))?;
        let f_grad = self.f_grad.ok_or_else(|| missing("state cost gradient"))?;
        let f_hess = self.f_hess.ok_or_else(|| missing("state cost Hessian"))?;
        let g_eval = self.g_eval.ok_or_else(|| missing("control cost"))?;
        let g_d1 = self.g_d1.ok_or_else(|| missing("control cost derivative"))?;
        let g_d2 = self.g_d2.ok_or_else(|| missing("control cost second derivative"))?;
        let h_eval = self.h_eval.ok_or_else(|| missing("dynamics"))?;
        let h_jac_x = self.h_jac_x.ok_or_else(|| missing("dynamics state Jacobian"))?;
        let h_jac_u = self.h_jac_u.ok_or_else(|| missing("dynamics control Jacobian"))?;
        let x0 = self.x0.ok_or_else(|| missing("initial state"))?;
        if x0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "x0 has length {}, state dimension is {n}",
                x0.len()
            )));
        }
        let (terminal_matrix, terminal_value) = match self.terminal {
            Some((e, e_f)) => {
                if e.ncols() != n || e.nrows() != e_f.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "terminal rows {}x{} incompatible with e_f length {} / state dim {n}",
                        e.nrows(),
                        e.ncols(),
                        e_f.len()
                    )));
                }
                (e, e_f)
            }
            None => (DMatrix::zeros(0, n), DVector::zeros(0)),
        };

        let problem = NlpProblem {
            state_dim: n,
            grid: self.grid,
            f_eval,
            f_grad,
            f_hess,
            g_eval,
            g_d1,
            g_d2,
            g_d3: self.g_d3,
            h_eval,
            h_jac_x,
            h_jac_u,
            x0,
            terminal_matrix,
            terminal_value,
            alpha: self.alpha,
            beta: self.beta,
        };

        validate_bounds(&problem)?;
        validate_convexity(&problem)?;
        if !self.skip_derivative_check {
            validate_derivatives(&problem)?;
        }
        Ok(problem)
    }
}

fn validate_bounds(p: &NlpProblem) -> Result<()> {
    for i in 0..p.grid.n_nodes() {
        let (lo, hi) = p.bounds_at_node(i);
        if lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidProblem(format!("NaN control bound at node {i}")));
        }
        if lo > hi {
            return Err(Error::InfeasibleBoxes { node: i, alpha: lo, beta: hi });
        }
    }
    Ok(())
}

/// Samples `g''` at a handful of admissible controls per node.
fn validate_convexity(p: &NlpProblem) -> Result<()> {
    for i in 0..p.grid.n_nodes() {
        let (lo, hi) = p.bounds_at_node(i);
        for u in control_samples(lo, hi) {
            let d2 = (p.g_d2)(u);
            if !(d2 > 0.0) {
                return Err(Error::StrongConvexityViolated { node: i, value: d2 });
            }
        }
    }
    Ok(())
}

fn control_samples(lo: f64, hi: f64) -> Vec<f64> {
    let a = if lo.is_finite() { lo } else { -1.0 };
    let b = if hi.is_finite() { hi } else { 1.0 };
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    (0..5).map(|k| a + (b - a) * k as f64 / 4.0).collect()
}

/// Central-difference consistency check of the supplied derivatives at three
/// deterministic pseudo-random points near the initial state.
fn validate_derivatives(p: &NlpProblem) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let n = p.state_dim;
    let rel = 1e-5;
    for trial in 0..3 {
        let x = DVector::from_fn(n, |j, _| {
            let scale = 0.1 * (1.0 + p.x0[j].abs());
            p.x0[j] + scale * rng.gen_range(-1.0..1.0)
        });
        let t = p.grid.t0() + rng.gen_range(0.0..1.0) * (p.grid.tf() - p.grid.t0());
        let (lo, hi) = ((p.alpha)(t), (p.beta)(t));
        let u = sample_control(lo, hi, rng.gen_range(0.0..1.0));

        check_gradient(p, &x, rel).map_err(|e| e.with_context(format!("trial {trial}")))?;
        check_hessian(p, &x, rel).map_err(|e| e.with_context(format!("trial {trial}")))?;
        check_control_cost(p, u, rel).map_err(|e| e.with_context(format!("trial {trial}")))?;
        check_dynamics_jacobians(p, &x, u, rel)
            .map_err(|e| e.with_context(format!("trial {trial}")))?;
    }
    Ok(())
}

fn sample_control(lo: f64, hi: f64, frac: f64) -> f64 {
    let a = if lo.is_finite() { lo } else { -1.0_f64.min(hi) };
    let b = if hi.is_finite() { hi } else { 1.0_f64.max(a) };
    a + (b - a) * frac
}

fn fd_step(v: f64) -> f64 {
    6e-6 * (1.0 + v.abs())
}

fn check_close(fd: f64, analytic: f64, rel: f64, what: &str) -> Result<()> {
    if (fd - analytic).abs() > rel * f64::max(1.0, analytic.abs()) {
        return Err(Error::DerivativeCheck(format!(
            "{what}: finite difference {fd:.9e} vs analytic {analytic:.9e}"
        )));
    }
    Ok(())
}

fn check_gradient(p: &NlpProblem, x: &DVector<f64>, rel: f64) -> Result<()> {
    let grad = (p.f_grad)(x);
    if grad.len() != p.state_dim {
        return Err(Error::DimensionMismatch("f_grad length".into()));
    }
    for j in 0..p.state_dim {
        let e = fd_step(x[j]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += e;
        xm[j] -= e;
        let fd = ((p.f_eval)(&xp) - (p.f_eval)(&xm)) / (2.0 * e);
        check_close(fd, grad[j], rel, &format!("f_grad[{j}]"))?;
    }
    Ok(())
}

fn check_hessian(p: &NlpProblem, x: &DVector<f64>, rel: f64) -> Result<()> {
    let n = p.state_dim;
    let hess = (p.f_hess)(x);
    if hess.nrows() != n || hess.ncols() != n {
        return Err(Error::DimensionMismatch("f_hess shape".into()));
    }
    let scale = hess.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (hess[(i, j)] - hess[(j, i)]).abs() > 1e-8 * scale {
                return Err(Error::InvalidProblem(format!(
                    "f_hess asymmetric at ({i},{j}): {} vs {}",
                    hess[(i, j)],
                    hess[(j, i)]
                )));
            }
        }
    }
    for j in 0..n {
        let e = fd_step(x[j]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += e;
        xm[j] -= e;
        let col = ((p.f_grad)(&xp) - (p.f_grad)(&xm)) / (2.0 * e);
        for i in 0..n {
            check_close(col[i], hess[(i, j)], rel, &format!("f_hess[({i},{j})]"))?;
        }
    }
    Ok(())
}

fn check_control_cost(p: &NlpProblem, u: f64, rel: f64) -> Result<()> {
    let e = fd_step(u);
    let fd1 = ((p.g_eval)(u + e) - (p.g_eval)(u - e)) / (2.0 * e);
    check_close(fd1, (p.g_d1)(u), rel, "g_d1")?;
    let fd2 = ((p.g_d1)(u + e) - (p.g_d1)(u - e)) / (2.0 * e);
    check_close(fd2, (p.g_d2)(u), rel, "g_d2")?;
    if let Some(d3) = &p.g_d3 {
        let fd3 = ((p.g_d2)(u + e) - (p.g_d2)(u - e)) / (2.0 * e);
        check_close(fd3, d3(u), rel, "g_d3")?;
    }
    Ok(())
}

fn check_dynamics_jacobians(p: &NlpProblem, x: &DVector<f64>, u: f64, rel: f64) -> Result<()> {
    let n = p.state_dim;
    let jx = (p.h_jac_x)(x, u);
    let ju = (p.h_jac_u)(x, u);
    if jx.nrows() != n || jx.ncols() != n || ju.len() != n {
        return Err(Error::DimensionMismatch("dynamics Jacobian shape".into()));
    }
    for j in 0..n {
        let e = fd_step(x[j]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += e;
        xm[j] -= e;
        let col = ((p.h_eval)(&xp, u) - (p.h_eval)(&xm, u)) / (2.0 * e);
        for i in 0..n {
            check_close(col[i], jx[(i, j)], rel, &format!("h_jac_x[({i},{j})]"))?;
        }
    }
    let e = fd_step(u);
    let col = ((p.h_eval)(x, u + e) - (p.h_eval)(x, u - e)) / (2.0 * e);
    for i in 0..n {
        check_close(col[i], ju[i], rel, &format!("h_jac_u[{i}]"))?;
    }
    Ok(())
}

/// Forward-Euler simulation of the nonlinear dynamics under the given node
/// controls. The terminal constraint is not enforced here.
pub fn rollout(problem: &NlpProblem, controls: &DVector<f64>, grid: TimeGrid) -> Result<Trajectory> {
    if controls.len() != grid.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "controls has {} entries, grid has {} nodes",
            controls.len(),
            grid.n_nodes()
        )));
    }
    let n = problem.state_dim();
    let h = grid.h_step();
    let mut states = DMatrix::zeros(grid.n_nodes(), n);
    let mut x = problem.x0().clone();
    states.row_mut(0).copy_from(&x.transpose());
    for i in 0..grid.n_intervals() {
        let dx = (problem.h_eval)(&x, controls[i]);
        x += h * dx;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::DynamicsBlowUp { node: i + 1 });
        }
        states.row_mut(i + 1).copy_from(&x.transpose());
    }
    Trajectory::new(grid, states, controls.clone())
}

/// Rectangle-rule value of the running cost along a trajectory.
pub fn nlp_objective(problem: &NlpProblem, traj: &Trajectory) -> Result<f64> {
    check_conforms(problem, traj)?;
    let h = traj.grid.h_step();
    let mut total = 0.0;
    for i in 0..traj.grid.n_intervals() {
        let x = traj.state(i);
        total += ((problem.f_eval)(&x) + (problem.g_eval)(traj.controls[i])) * h;
    }
    Ok(total)
}

/// Weighted l1 norm of the forward-difference dynamics defect:
/// `sum_i |(x_{i+1} - x_i)/h - h(x_i, u_i)|_1 * h`.
pub fn l1_defect_norm(traj: &Trajectory, problem: &NlpProblem) -> Result<f64> {
    check_conforms(problem, traj)?;
    let h = traj.grid.h_step();
    let mut total = 0.0;
    for i in 0..traj.grid.n_intervals() {
        let x = traj.state(i);
        let xn = traj.state(i + 1);
        let defect = (xn - &x) / h - (problem.h_eval)(&x, traj.controls[i]);
        total += defect.iter().map(|v| v.abs()).sum::<f64>() * h;
    }
    Ok(total)
}

fn check_conforms(problem: &NlpProblem, traj: &Trajectory) -> Result<()> {
    if traj.state_dim() != problem.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory state dim {} vs problem state dim {}",
            traj.state_dim(),
            problem.state_dim()
        )));
    }
    Ok(())
}
