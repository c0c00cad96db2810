//! Parallel PDE evaluator: `F^alpha(y)` via the finite-difference solver, one
//! shared per-level discretization, parameter points fanned out over rayon.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use misc_core::estimator::locate;
use misc_core::fd::{FieldDiscretization, SolverOptions};
use misc_core::field::{FieldSpec, QoiSpec};
use misc_core::{Error, Evaluator, Result};
use rayon::prelude::*;

#[derive(Debug)]
pub struct PdeEvaluator {
    field: FieldSpec,
    qoi: QoiSpec,
    h0: f64,
    opts: SolverOptions,
    levels: Mutex<HashMap<Vec<u32>, Arc<FieldDiscretization>>>,
}

impl PdeEvaluator {
    pub fn new(field: FieldSpec, qoi: QoiSpec, h0: f64, dof_cap: usize) -> Result<Self> {
        if qoi.dim() != field.dim() {
            return Err(Error::DimensionMismatch {
                expected: field.dim(),
                found: qoi.dim(),
            });
        }
        Ok(Self {
            field,
            qoi,
            h0,
            opts: SolverOptions {
                dof_cap,
                ..SolverOptions::default()
            },
            levels: Mutex::new(HashMap::new()),
        })
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn dof_cap(&self) -> usize {
        self.opts.dof_cap
    }

    fn discretization(&self, alpha: &[u32]) -> Result<Arc<FieldDiscretization>> {
        if let Some(d) = self.levels.lock().unwrap().get(alpha) {
            return Ok(d.clone());
        }
        // Built outside the lock; a racing duplicate is identical and harmless.
        let d = Arc::new(FieldDiscretization::new(
            &self.field,
            &self.qoi,
            alpha,
            self.h0,
            self.opts.dof_cap,
        )?);
        Ok(self
            .levels
            .lock()
            .unwrap()
            .entry(alpha.to_vec())
            .or_insert(d)
            .clone())
    }
}

impl Evaluator for PdeEvaluator {
    fn evaluate(&self, alpha: &[u32], y: &[f64]) -> Result<f64> {
        let disc = self.discretization(alpha)?;
        disc.evaluate(y, &self.opts).map(|(q, _)| q)
    }

    fn evaluate_batch(&self, alpha: &[u32], ys: &[Vec<f64>]) -> Result<Vec<f64>> {
        let disc = self
            .discretization(alpha)
            .map_err(|e| locate(e, alpha, ys.first().map_or(&[][..], |y| y)))?;
        ys.par_iter()
            .map(|y| {
                disc.evaluate(y, &self.opts)
                    .map(|(q, _)| q)
                    .map_err(|e| locate(e, alpha, y))
            })
            .collect()
    }

    /// Unknowns of the grid at `alpha`, also beyond the cap.
    fn dof(&self, alpha: &[u32]) -> u64 {
        let cells0 = (1.0 / self.h0).round() as u64;
        alpha.iter().map(|&a| (cells0 << a) - 1).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use misc_core::fd::{assemble_field, build_grid, evaluate_qoi, solve};

    fn evaluator(dim: usize, n: usize, cap: usize) -> PdeEvaluator {
        PdeEvaluator::new(
            FieldSpec::new(dim, n).unwrap(),
            QoiSpec::standard(dim).unwrap(),
            1.0 / 3.0,
            cap,
        )
        .unwrap()
    }

    #[test]
    fn batch_matches_serial_and_direct_solve() {
        let e = evaluator(1, 2, 1 << 14);
        let ys = vec![vec![0.0, 0.0], vec![0.5, -1.0], vec![-1.0, 1.0]];
        let batch = e.evaluate_batch(&[3], &ys).unwrap();
        for (y, b) in ys.iter().zip(&batch) {
            assert_eq!(e.evaluate(&[3], y).unwrap(), *b);
            let grid = build_grid(&[3], 1.0 / 3.0).unwrap();
            let sol = solve(&assemble_field(e.field(), y, &grid), &SolverOptions::default()).unwrap();
            let direct = evaluate_qoi(&sol, &QoiSpec::standard(1).unwrap());
            assert!((direct - b).abs() < 1e-13 * b.abs());
        }
    }

    #[test]
    fn dof_counts() {
        let e = evaluator(3, 1, 1 << 17);
        assert_eq!(e.dof(&[1, 1, 1]), 125);
        assert_eq!(e.dof(&[2, 2, 2]), 1331);
        assert_eq!(e.dof(&[7, 1, 2]), 383 * 5 * 11);
    }

    #[test]
    fn cap_errors_carry_the_point() {
        let e = evaluator(1, 1, 100);
        match e.evaluate_batch(&[6], &[vec![0.25]]) {
            Err(Error::Evaluation { alpha, y, reason }) => {
                assert_eq!(alpha, vec![6]);
                assert_eq!(y, vec![0.25]);
                assert!(reason.contains("191"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }
}
