//! Five standard control-constrained benchmark problems with hand-coded
//! derivatives: a trigonometric-gain system, a continuous stirred tank
//! reactor, the Rayleigh problem, and two van der Pol variants with fixed
//! terminal state.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::NlpProblem;

/// Time horizon of each benchmark.
pub fn example_horizon(id: usize) -> Result<f64> {
    match id {
        1 | 4 => Ok(5.0),
        2 => Ok(0.78),
        3 => Ok(4.5),
        5 => Ok(2.4),
        _ => Err(Error::InvalidProblem(format!("unknown example id {id} (valid: 1..=5)"))),
    }
}

/// Builds benchmark `id` on a grid with `n_intervals` forward-Euler steps.
pub fn make_example(id: usize, n_intervals: usize) -> Result<NlpProblem> {
    let grid = TimeGrid::new(0.0, example_horizon(id)?, n_intervals)?;
    match id {
        1 => example1(grid),
        2 => example2(grid),
        3 => example3(grid),
        4 => example4(grid),
        5 => example5(grid),
        _ => unreachable!(),
    }
}

fn quadratic_state_cost(
    builder: crate::problem::NlpProblemBuilder,
    weight: f64,
) -> crate::problem::NlpProblemBuilder {
    builder.state_cost(
        move |x: &DVector<f64>| 0.5 * weight * x.norm_squared(),
        move |x: &DVector<f64>| weight * x,
        move |x: &DVector<f64>| DMatrix::identity(x.len(), x.len()) * weight,
    )
}

fn quadratic_control_cost(
    builder: crate::problem::NlpProblemBuilder,
    weight: f64,
) -> crate::problem::NlpProblemBuilder {
    builder
        .control_cost(move |u| 0.5 * weight * u * u, move |u| weight * u, move |_| weight)
        .control_cost_d3(|_| 0.0)
}

/// Trigonometric control gain, unconstrained control, free terminal state.
fn example1(grid: TimeGrid) -> Result<NlpProblem> {
    let builder = NlpProblem::builder(2, grid);
    let builder = quadratic_state_cost(builder, 1.0);
    let builder = quadratic_control_cost(builder, 1.0);
    builder
        .dynamics(
            |x, u| {
                let gain = 2.0 + (2.0 * x[0]).cos();
                DVector::from_vec(vec![
                    -x[0] + x[1],
                    -0.5 * x[0] - 0.5 * x[1] * (1.0 - gain * gain) + gain * u,
                ])
            },
            |x, u| {
                let gain = 2.0 + (2.0 * x[0]).cos();
                let dgain = -2.0 * (2.0 * x[0]).sin();
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        -1.0,
                        1.0,
                        -0.5 + x[1] * gain * dgain + u * dgain,
                        -0.5 * (1.0 - gain * gain),
                    ],
                )
            },
            |x, _| DVector::from_vec(vec![0.0, 2.0 + (2.0 * x[0]).cos()]),
        )
        .initial_state(DVector::from_vec(vec![PI / 3.0, PI / 4.0]))
        .build()
}

/// Continuous stirred tank reactor with an Arrhenius-type reaction term.
fn example2(grid: TimeGrid) -> Result<NlpProblem> {
    let reaction = |x1: f64| (25.0 * x1 / (x1 + 2.0)).exp();
    let builder = NlpProblem::builder(2, grid);
    let builder = quadratic_state_cost(builder, 2.0);
    let builder = quadratic_control_cost(builder, 0.2);
    builder
        .dynamics(
            move |x, u| {
                let e = reaction(x[0]);
                DVector::from_vec(vec![
                    -2.0 * (x[0] + 0.25) + (x[1] + 0.5) * e - (x[0] + 0.25) * u,
                    0.5 - x[1] - (x[1] + 0.5) * e,
                ])
            },
            move |x, u| {
                let e = reaction(x[0]);
                let de = e * 50.0 / ((x[0] + 2.0) * (x[0] + 2.0));
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        -2.0 + (x[1] + 0.5) * de - u,
                        e,
                        -(x[1] + 0.5) * de,
                        -1.0 - e,
                    ],
                )
            },
            |x, _| DVector::from_vec(vec![-(x[0] + 0.25), 0.0]),
        )
        .initial_state(DVector::from_vec(vec![0.05, 0.0]))
        .constant_bounds(-1.0, 1.0)
        .build()
}

/// Rayleigh problem: state weight only on the first component.
fn example3(grid: TimeGrid) -> Result<NlpProblem> {
    let builder = NlpProblem::builder(2, grid)
        .state_cost(
            |x| 0.5 * x[0] * x[0],
            |x| DVector::from_vec(vec![x[0], 0.0]),
            |_| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        );
    let builder = quadratic_control_cost(builder, 1.0);
    builder
        .dynamics(
            |x, u| {
                DVector::from_vec(vec![
                    x[1],
                    (1.4 - 0.14 * x[1] * x[1]) * x[1] - x[0] + 4.0 * u,
                ])
            },
            |x, _| {
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 1.4 - 0.42 * x[1] * x[1]])
            },
            |_, _| DVector::from_vec(vec![0.0, 4.0]),
        )
        .initial_state(DVector::from_vec(vec![-5.0, -5.0]))
        .constant_bounds(-1.0, 1.0)
        .build()
}

fn van_der_pol_dynamics(
    builder: crate::problem::NlpProblemBuilder,
) -> crate::problem::NlpProblemBuilder {
    builder.dynamics(
        |x, u| {
            DVector::from_vec(vec![x[1], (1.0 - x[0] * x[0]) * x[1] - x[0] + u])
        },
        |x, _| {
            DMatrix::from_row_slice(
                2,
                2,
                &[0.0, 1.0, -2.0 * x[0] * x[1] - 1.0, 1.0 - x[0] * x[0]],
            )
        },
        |_, _| DVector::from_vec(vec![0.0, 1.0]),
    )
}

/// Van der Pol with fixed terminal state (-1, 0).
fn example4(grid: TimeGrid) -> Result<NlpProblem> {
    let builder = NlpProblem::builder(2, grid);
    let builder = quadratic_state_cost(builder, 1.0);
    let builder = quadratic_control_cost(builder, 1.0);
    van_der_pol_dynamics(builder)
        .initial_state(DVector::from_vec(vec![1.0, 0.0]))
        .terminal_constraint(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, 0.0]))
        .constant_bounds(-0.75, 0.75)
        .build()
}

/// Van der Pol with quartic control cost, asymmetric bounds, and terminal
/// state pinned to the origin.
fn example5(grid: TimeGrid) -> Result<NlpProblem> {
    let builder = NlpProblem::builder(2, grid);
    let builder = quadratic_state_cost(builder, 1.0);
    let builder = builder
        .control_cost(
            |u| 0.5 * (u.powi(4) + u * u),
            |u| 2.0 * u.powi(3) + u,
            |u| 6.0 * u * u + 1.0,
        )
        .control_cost_d3(|u| 12.0 * u);
    van_der_pol_dynamics(builder)
        .initial_state(DVector::from_vec(vec![1.0, 0.0]))
        .terminal_constraint(DMatrix::identity(2, 2), DVector::zeros(2))
        .constant_bounds(-0.25, 1.0)
        .build()
}
