// debug scratch: control-level initial guesses for the reactor benchmark
use nalgebra::{DMatrix, DVector};
use seqdual::benchmarks::make_example;
use seqdual::problem::{nlp_objective, rollout};
use seqdual::quasilin::build_subproblem;
use seqdual::transcribe::transcribe;
use seqdual::qp::{solve_box_qp, QpSolverConfig};
use seqdual::trajectory::{sup_norm, Trajectory};

fn main() {
    for n in [50usize, 1000] {
        let p = make_example(2, n).unwrap();
        let grid = p.grid();
        let nodes = grid.n_nodes();
        for (name, states_kind, uval) in [
            ("hold u=0", "hold", 0.0),
            ("hold u=1", "hold", 1.0),
            ("hold u=0.5", "hold", 0.5),
            ("hold u=-0.5", "hold", -0.5),
            ("roll u=1", "roll", 1.0),
            ("roll u=0.5", "roll", 0.5),
            ("roll u=-1", "roll", -1.0),
        ] {
            let u = DVector::from_element(nodes, uval);
            let nominal = match states_kind {
                "roll" => match rollout(&p, &u, grid) { Ok(t) => t, Err(_) => { println!("n {n} {name}: rollout blowup"); continue; } },
                _ => {
                    let mut states = DMatrix::zeros(nodes, 2);
                    for i in 0..nodes { states.row_mut(i).copy_from(&p.x0().transpose()); }
                    Trajectory::new(grid, states, u).unwrap()
                }
            };
            let mut cur = nominal;
            let mut iters = 0; let mut ok = false; let mut obj = f64::NAN;
            for _ in 0..25 {
                let lq = build_subproblem(&p, &cur).unwrap();
                let qp = transcribe(&lq).unwrap();
                match solve_box_qp(&qp, &QpSolverConfig::default()) {
                    Ok(sol) => {
                        iters += 1;
                        let d = sup_norm(&(&sol.traj.states - &cur.states)).unwrap()
                            + (&sol.traj.controls - &cur.controls).amax();
                        cur = sol.traj;
                        if d < 1e-5 { ok = true; obj = nlp_objective(&p, &cur).unwrap(); break; }
                    }
                    Err(_) => break,
                }
            }
            println!("n {n:5} {name:12}: converged={ok} iters={iters} obj={obj:.4}");
        }
    }
}
