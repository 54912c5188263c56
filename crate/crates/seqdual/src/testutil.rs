//! Shared fixtures for unit tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::grid::TimeGrid;
use crate::lq::LqProblem;

/// Scalar single-integrator LQ on [0, 1]: x' = u, cost 1/2 u^2, no bounds.
pub(crate) fn scalar_integrator(nn: usize) -> LqProblem {
    let grid = TimeGrid::new(0.0, 1.0, nn).unwrap();
    let nodes = grid.n_nodes();
    LqProblem {
        grid,
        w: vec![DMatrix::zeros(1, 1); nodes],
        omega: vec![DVector::zeros(1); nodes],
        r_quad: vec![1.0; nodes],
        r_lin: vec![0.0; nodes],
        a: vec![DMatrix::zeros(1, 1); nodes],
        b: vec![DVector::from_element(1, 1.0); nodes],
        c: vec![DVector::zeros(1); nodes],
        alpha: vec![f64::NEG_INFINITY; nodes],
        beta: vec![f64::INFINITY; nodes],
        x0: DVector::zeros(1),
        e: DMatrix::zeros(0, 1),
        e_f: DVector::zeros(0),
        objective_offset: 0.0,
    }
}

/// Random PSD-cost LQ instance with a mix of finite and infinite bounds.
/// When `terminal` is set, the target is made reachable by construction.
pub(crate) fn random_lq(
    rng: &mut ChaCha8Rng,
    n: usize,
    nn: usize,
    with_bounds: bool,
    terminal: bool,
) -> LqProblem {
    let grid = TimeGrid::new(0.0, 1.0 + rng.gen_range(0.0..2.0), nn).unwrap();
    let nodes = grid.n_nodes();
    let psd = |rng: &mut ChaCha8Rng| {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose()
    };
    let mut lq = LqProblem {
        grid,
        w: (0..nodes).map(|_| psd(rng)).collect(),
        omega: (0..nodes)
            .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
            .collect(),
        r_quad: (0..nodes).map(|_| rng.gen_range(0.2..2.0)).collect(),
        r_lin: (0..nodes).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        a: (0..nodes)
            .map(|_| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.8..0.8)))
            .collect(),
        b: (0..nodes)
            .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
            .collect(),
        c: (0..nodes)
            .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5)))
            .collect(),
        alpha: vec![f64::NEG_INFINITY; nodes],
        beta: vec![f64::INFINITY; nodes],
        x0: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
        e: DMatrix::zeros(0, n),
        e_f: DVector::zeros(0),
        objective_offset: 0.0,
    };
    if with_bounds {
        for i in 0..nodes {
            match rng.gen_range(0..4) {
                0 => {}
                1 => lq.alpha[i] = rng.gen_range(-1.0..0.0),
                2 => lq.beta[i] = rng.gen_range(0.0..1.0),
                _ => {
                    let lo = rng.gen_range(-1.0..0.0);
                    lq.alpha[i] = lo;
                    lq.beta[i] = lo + rng.gen_range(0.2..1.5);
                }
            }
        }
    }
    if terminal {
        let k = 1 + rng.gen_range(0..n);
        let e = DMatrix::from_fn(k, n, |_, _| rng.gen_range(-1.0..1.0));
        // Roll a feasible control sequence forward to pick a reachable target.
        let controls = DVector::from_fn(nodes, |i, _| {
            let lo = lq.alpha[i].max(-1.0);
            let hi = lq.beta[i].min(1.0);
            lo + (hi - lo) * rng.gen_range(0.0..1.0)
        });
        let traj = lq.rollout(&controls).unwrap();
        lq.e_f = &e * traj.state(nodes - 1);
        lq.e = e;
    }
    lq
}
