//! Small programs with known solutions, used to sanity-check the solver.

use super::{Nlp, NlpEval};
use crate::sparse::Triplets;

/// `min ‖x‖²` subject to `Σx = 1`, no bounds. The solution is `x_i = 1/n`.
#[derive(Debug, Clone)]
pub struct SumConstrainedQp {
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SumConstrainedQp {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }
}

impl Nlp for SumConstrainedQp {
    fn n_vars(&self) -> usize {
        self.n
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn n_eq(&self) -> usize {
        1
    }

    fn n_ineq(&self) -> usize {
        0
    }

    fn evaluate(&self, x: &[f64]) -> Result<NlpEval, String> {
        let mut jac_eq = Triplets::new(1, self.n);
        for j in 0..self.n {
            jac_eq.push(0, j, 1.0);
        }
        Ok(NlpEval {
            f: x.iter().map(|v| v * v).sum(),
            grad: x.iter().map(|v| 2.0 * v).collect(),
            eq: vec![x.iter().sum::<f64>() - 1.0],
            ineq: Vec::new(),
            jac_eq,
            jac_ineq: Triplets::new(0, self.n),
        })
    }
}

/// Rosenbrock's function `(1 − a)² + 100(b − a²)²` on `[0, 2] × [−2, 2]`
/// subject to `a + b ≤ 1`. The unconstrained minimizer `(1, 1)` is cut
/// off, so the solution lies on the line.
#[derive(Debug, Clone)]
pub struct ConstrainedRosenbrock {
    lower: [f64; 2],
    upper: [f64; 2],
}

impl Default for ConstrainedRosenbrock {
    fn default() -> Self {
        Self {
            lower: [0.0, -2.0],
            upper: [2.0, 2.0],
        }
    }
}

impl ConstrainedRosenbrock {
    pub fn objective(a: f64, b: f64) -> f64 {
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    pub fn feasible(a: f64, b: f64) -> bool {
        a + b <= 1.0
    }
}

impl Nlp for ConstrainedRosenbrock {
    fn n_vars(&self) -> usize {
        2
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn n_eq(&self) -> usize {
        0
    }

    fn n_ineq(&self) -> usize {
        1
    }

    fn evaluate(&self, x: &[f64]) -> Result<NlpEval, String> {
        let (a, b) = (x[0], x[1]);
        let mut jac_ineq = Triplets::new(1, 2);
        jac_ineq.push(0, 0, -1.0);
        jac_ineq.push(0, 1, -1.0);
        Ok(NlpEval {
            f: Self::objective(a, b),
            grad: vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ],
            eq: Vec::new(),
            ineq: vec![1.0 - a - b],
            jac_eq: Triplets::new(0, 2),
            jac_ineq,
        })
    }
}
