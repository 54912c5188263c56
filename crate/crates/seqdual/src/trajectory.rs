use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// State/control samples on a time grid.
///
/// Row `i` of `states` is the state at node `i`; `controls[i]` is the control
/// value at node `i`, held constant on `[t_i, t_{i+1})`. The control at the
/// final node is carried for plotting symmetry only and never enters the
/// dynamics defect.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: DMatrix<f64>,
    pub controls: DVector<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, states: DMatrix<f64>, controls: DVector<f64>) -> Result<Self> {
        let nodes = grid.n_nodes();
        if states.nrows() != nodes {
            return Err(Error::DimensionMismatch(format!(
                "states has {} rows, grid has {} nodes",
                states.nrows(),
                nodes
            )));
        }
        if controls.len() != nodes {
            return Err(Error::DimensionMismatch(format!(
                "controls has {} entries, grid has {} nodes",
                controls.len(),
                nodes
            )));
        }
        if states.iter().any(|v| !v.is_finite()) || controls.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite trajectory entry".into()));
        }
        Ok(Trajectory { grid, states, controls })
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    /// State at node `i` as a column vector.
    pub fn state(&self, i: usize) -> DVector<f64> {
        self.states.row(i).transpose()
    }

    /// Node-wise convex combination `self + kappa * (other - self)`.
    pub fn lerp(&self, other: &Trajectory, kappa: f64) -> Trajectory {
        Trajectory {
            grid: self.grid,
            states: &self.states + (&other.states - &self.states) * kappa,
            controls: &self.controls + (&other.controls - &self.controls) * kappa,
        }
    }

    /// Writes `t, x1..xn, u` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let n = self.state_dim();
        write!(out, "t")?;
        for j in 0..n {
            write!(out, ",x{}", j + 1)?;
        }
        writeln!(out, ",u")?;
        for (i, t) in self.grid.node_times().enumerate() {
            write!(out, "{}", fmt17(t))?;
            for j in 0..n {
                write!(out, ",{}", fmt17(self.states[(i, j)]))?;
            }
            writeln!(out, ",{}", fmt17(self.controls[i]))?;
        }
        Ok(())
    }

    /// Reads a trajectory written by [`Trajectory::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trajectory file".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "t" || cols[cols.len() - 1] != "u" {
            return Err(Error::Parse(format!("unexpected trajectory header: {header}")));
        }
        let n = cols.len() - 2;
        let mut times = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut controls = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != n + 2 {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    n + 2
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {s:?} on row {}", lineno + 2)))
            };
            times.push(parse(fields[0])?);
            rows.push(fields[1..=n].iter().map(|s| parse(s)).collect::<Result<_>>()?);
            controls.push(parse(fields[n + 1])?);
        }
        if times.len() < 3 {
            return Err(Error::Parse("trajectory needs at least 3 rows".into()));
        }
        let grid = TimeGrid::new(times[0], *times.last().unwrap(), times.len() - 1)?;
        let states = DMatrix::from_fn(times.len(), n, |i, j| rows[i][j]);
        Trajectory::new(grid, states, DVector::from_vec(controls))
    }
}

/// Costate samples on a time grid, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory {
    pub grid: TimeGrid,
    pub values: DMatrix<f64>,
}

impl CostateTrajectory {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "costate has {} rows, grid has {} nodes",
                values.nrows(),
                grid.n_nodes()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite costate entry".into()));
        }
        Ok(CostateTrajectory { grid, values })
    }

    pub fn value(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }
}

/// Componentwise sup norm: max over entries of the absolute value.
pub fn sup_norm(values: &DMatrix<f64>) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(values.iter().fold(0.0, |acc, v| acc.max(v.abs())))
}

/// Formats with 17 significant digits so the value round-trips losslessly.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
