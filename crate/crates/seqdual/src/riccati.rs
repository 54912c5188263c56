//! Structured solver for discrete-time equality-constrained LQ problems
//!
//!   min  sum_i 1/2 x_i'Q_i x_i + q_i'x_i + 1/2 u_i'R_i u_i + r_i'u_i
//!        + 1/2 x_N'Qn x_N + qn'x_N
//!   s.t. x_{i+1} = F_i x_i + G_i u_i + w_i,   x_0 given,
//!        E x_N = b                            (optional),
//!
//! by backward value-function recursion. Cost is linear in the horizon, which
//! is what makes the transcribed subproblems cheap at fine grids. The
//! terminal rows are handled by carrying sensitivity columns of the linear
//! value terms with respect to the terminal multiplier and solving a final
//! k-by-k system.
//!
//! Multiplier convention: with the Lagrangian
//! `L = cost + sum_i nu_i'(F_i x_i + G_i u_i + w_i - x_{i+1}) + lam'(E x_N - b)`
//! the returned `multipliers[i]` is `nu_i` and `terminal_multiplier` is `lam`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Per-stage data. `f[i]`, `g[i]`, `w[i]` define the transition; `q_*`, `r_*`
/// the stage costs for `i = 0..N-1`; `qn_*` the terminal cost.
pub struct LqStages {
    pub f: Vec<DMatrix<f64>>,
    pub g: Vec<DMatrix<f64>>,
    pub w: Vec<DVector<f64>>,
    pub q_mat: Vec<DMatrix<f64>>,
    pub q_vec: Vec<DVector<f64>>,
    pub r_mat: Vec<DMatrix<f64>>,
    pub r_vec: Vec<DVector<f64>>,
    pub qn_mat: DMatrix<f64>,
    pub qn_vec: DVector<f64>,
}

impl LqStages {
    pub fn horizon(&self) -> usize {
        self.f.len()
    }

    pub fn state_dim(&self) -> usize {
        self.qn_mat.nrows()
    }

    pub fn control_dim(&self) -> usize {
        if self.r_mat.is_empty() { 0 } else { self.r_mat[0].nrows() }
    }
}

pub struct RiccatiSolution {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub multipliers: Vec<DVector<f64>>,
    pub terminal_multiplier: DVector<f64>,
}

/// Value-function matrices and multi-column linear terms from one backward
/// sweep. Column 0 carries the base problem; columns `1..=k` carry the
/// sensitivities to the terminal multiplier.
pub struct BackwardSweep {
    p_mat: Vec<DMatrix<f64>>,
    p_cols: Vec<DMatrix<f64>>,
    k_gain: Vec<DMatrix<f64>>,
    k_cols: Vec<DMatrix<f64>>,
}

impl BackwardSweep {
    /// Quadratic term of the value function at the initial node.
    pub fn initial_value_hessian(&self) -> &DMatrix<f64> {
        &self.p_mat[0]
    }

    /// Base linear term of the value function at the initial node.
    pub fn initial_value_gradient(&self) -> DVector<f64> {
        self.p_cols[0].column(0).into()
    }
}

fn backward_sweep(stages: &LqStages, extra_terminal_cols: Option<&DMatrix<f64>>) -> Result<BackwardSweep> {
    let horizon = stages.horizon();
    let n = stages.state_dim();
    let ncols = 1 + extra_terminal_cols.map_or(0, |e| e.ncols());

    let mut p_mat = vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut p_cols = vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut k_gain = vec![DMatrix::zeros(0, 0); horizon];
    let mut k_cols = vec![DMatrix::zeros(0, 0); horizon];

    p_mat[horizon] = symmetrize(&stages.qn_mat);
    let mut terminal = DMatrix::zeros(n, ncols);
    terminal.column_mut(0).copy_from(&stages.qn_vec);
    if let Some(extra) = extra_terminal_cols {
        terminal.columns_mut(1, extra.ncols()).copy_from(extra);
    }
    p_cols[horizon] = terminal;

    for i in (0..horizon).rev() {
        let f = &stages.f[i];
        let g = &stages.g[i];
        let w = &stages.w[i];
        let p_next = &p_mat[i + 1];
        let pc_next = &p_cols[i + 1];

        let pg = p_next * g;
        let pf = p_next * f;
        let h = &stages.r_mat[i] + g.transpose() * &pg;
        let chol = cholesky_with_jitter(h)?;

        // m = G'(P+ w) + r (col 0) + G' p+ (all cols)
        let mut m = g.transpose() * pc_next;
        let base = g.transpose() * (p_next * w) + &stages.r_vec[i];
        {
            let mut col0 = m.column_mut(0);
            col0 += &base;
        }

        let gpf = g.transpose() * &pf;
        let kx = chol.solve(&gpf);
        let kc = chol.solve(&m);

        let mut p_new = &stages.q_mat[i] + f.transpose() * &pf - gpf.transpose() * &kx;
        p_new = symmetrize(&p_new);

        let mut pc_new = f.transpose() * pc_next - gpf.transpose() * &kc;
        let base_lin = &stages.q_vec[i] + f.transpose() * (p_next * w);
        {
            let mut col0 = pc_new.column_mut(0);
            col0 += &base_lin;
        }

        p_mat[i] = p_new;
        p_cols[i] = pc_new;
        k_gain[i] = kx;
        k_cols[i] = kc;
    }

    Ok(BackwardSweep { p_mat, p_cols, k_gain, k_cols })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn cholesky_with_jitter(h: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let sym = symmetrize(&h);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c);
    }
    let jitter = 1e-12 * (1.0 + sym.diagonal().amax());
    let bumped = &sym + DMatrix::identity(sym.nrows(), sym.ncols()) * jitter;
    Cholesky::new(bumped).ok_or_else(|| {
        Error::KktFactorization("stage Hessian not positive definite".into())
    })
}

/// Forward pass with multi-column state/control bookkeeping. Column 0 is the
/// base solution; remaining columns are sensitivities to the terminal
/// multiplier (their transitions carry no constant drift).
struct ForwardColumns {
    states: Vec<DMatrix<f64>>,
    controls: Vec<DMatrix<f64>>,
    multipliers: Vec<DMatrix<f64>>,
}

fn forward_sweep(stages: &LqStages, sweep: &BackwardSweep, x0: &DVector<f64>, ncols: usize) -> ForwardColumns {
    let horizon = stages.horizon();
    let n = stages.state_dim();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    let mut multipliers = Vec::with_capacity(horizon);

    let mut x = DMatrix::zeros(n, ncols);
    x.column_mut(0).copy_from(x0);
    states.push(x.clone());
    for i in 0..horizon {
        let u = -(&sweep.k_gain[i] * &x) - &sweep.k_cols[i];
        let mut x_next = &stages.f[i] * &x + &stages.g[i] * &u;
        {
            let mut col0 = x_next.column_mut(0);
            col0 += &stages.w[i];
        }
        let nu = &sweep.p_mat[i + 1] * &x_next + &sweep.p_cols[i + 1];
        controls.push(u);
        multipliers.push(nu);
        states.push(x_next.clone());
        x = x_next;
    }
    ForwardColumns { states, controls, multipliers }
}

fn combine(cols: &DMatrix<f64>, lam: &DVector<f64>) -> DVector<f64> {
    let mut out: DVector<f64> = cols.column(0).into();
    if lam.len() > 0 {
        out += cols.columns(1, lam.len()) * lam;
    }
    out
}

/// Solves the LQ problem without terminal rows.
pub fn solve_lq(stages: &LqStages, x0: &DVector<f64>) -> Result<RiccatiSolution> {
    let sweep = backward_sweep(stages, None)?;
    let cols = forward_sweep(stages, &sweep, x0, 1);
    let empty = DVector::zeros(0);
    Ok(RiccatiSolution {
        states: cols.states.iter().map(|m| combine(m, &empty)).collect(),
        controls: cols.controls.iter().map(|m| combine(m, &empty)).collect(),
        multipliers: cols.multipliers.iter().map(|m| combine(m, &empty)).collect(),
        terminal_multiplier: empty,
    })
}

/// Solves the LQ problem subject to `E x_N = b`.
pub fn solve_lq_terminal(
    stages: &LqStages,
    x0: &DVector<f64>,
    e: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<RiccatiSolution> {
    let k = e.nrows();
    if k == 0 {
        return solve_lq(stages, x0);
    }
    let sweep = backward_sweep(stages, Some(&e.transpose()))?;
    let cols = forward_sweep(stages, &sweep, x0, 1 + k);

    let x_last = &cols.states[stages.horizon()];
    let base: DVector<f64> = x_last.column(0).into();
    let sens = x_last.columns(1, k);
    let schur = e * sens;
    let rhs = b - e * base;
    let lam = schur.lu().solve(&rhs).ok_or_else(|| {
        Error::RankDeficient(
            "terminal rows are unreachable (discrete system uncontrollable toward E)".into(),
        )
    })?;

    Ok(RiccatiSolution {
        states: cols.states.iter().map(|m| combine(m, &lam)).collect(),
        controls: cols.controls.iter().map(|m| combine(m, &lam)).collect(),
        multipliers: cols.multipliers.iter().map(|m| combine(m, &lam)).collect(),
        terminal_multiplier: lam,
    })
}

/// Backward sweep only, for callers that pick the initial state afterwards.
pub fn backward(stages: &LqStages) -> Result<BackwardSweep> {
    backward_sweep(stages, None)
}

/// Forward pass from a chosen initial state using a plain backward sweep.
pub fn forward_from(stages: &LqStages, sweep: &BackwardSweep, x0: &DVector<f64>) -> RiccatiSolution {
    let cols = forward_sweep(stages, sweep, x0, 1);
    let empty = DVector::zeros(0);
    RiccatiSolution {
        states: cols.states.iter().map(|m| combine(m, &empty)).collect(),
        controls: cols.controls.iter().map(|m| combine(m, &empty)).collect(),
        multipliers: cols.multipliers.iter().map(|m| combine(m, &empty)).collect(),
        terminal_multiplier: empty,
    }
}
