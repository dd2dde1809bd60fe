//! Small dense LU factorization with partial pivoting.
//!
//! Only what the coolant network needs: factor once, then solve against
//! the matrix or its transpose (the latter drives the adjoint sensitivities).

/// Row-major square matrix of fixed size `N`.
pub type Matrix<const N: usize> = [[f64; N]; N];

/// Packed `PA = LU` factorization.
#[derive(Debug, Clone)]
pub struct Lu<const N: usize> {
    lu: Matrix<N>,
    perm: [usize; N],
}

/// Returned when a pivot vanishes (relative to the matrix scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    pub column: usize,
    pub pivot: f64,
}

impl<const N: usize> Lu<N> {
    pub fn factor(a: &Matrix<N>) -> Result<Self, Singular> {
        let scale = a
            .iter()
            .flat_map(|row| row.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);

        let mut lu = *a;
        let mut perm = [0usize; N];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }

        for col in 0..N {
            let (pivot_row, pivot_abs) =
                (col..N)
                    .map(|r| (r, lu[r][col].abs()))
                    .fold(
                        (col, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if !(pivot_abs > tiny) {
                return Err(Singular {
                    column: col,
                    pivot: pivot_abs,
                });
            }
            if pivot_row != col {
                lu.swap(pivot_row, col);
                perm.swap(pivot_row, col);
            }
            let pivot = lu[col][col];
            for r in (col + 1)..N {
                let factor = lu[r][col] / pivot;
                lu[r][col] = factor;
                if factor != 0.0 {
                    for c in (col + 1)..N {
                        lu[r][c] -= factor * lu[col][c];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64; N]) -> [f64; N] {
        let mut x = [0.0; N];
        for i in 0..N {
            x[i] = b[self.perm[i]];
        }
        for i in 0..N {
            for j in 0..i {
                x[i] -= self.lu[i][j] * x[j];
            }
        }
        for i in (0..N).rev() {
            for j in (i + 1)..N {
                x[i] -= self.lu[i][j] * x[j];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }

    /// Solves `Aᵀ y = c`.
    pub fn solve_transpose(&self, c: &[f64; N]) -> [f64; N] {
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = c, then Lᵀ v = w, then y = Pᵀ v.
        let mut w = *c;
        for i in 0..N {
            for j in 0..i {
                w[i] -= self.lu[j][i] * w[j];
            }
            w[i] /= self.lu[i][i];
        }
        for i in (0..N).rev() {
            for j in (i + 1)..N {
                w[i] -= self.lu[j][i] * w[j];
            }
        }
        let mut y = [0.0; N];
        for i in 0..N {
            y[self.perm[i]] = w[i];
        }
        y
    }

    /// Explicit 1-norm condition number `‖A‖₁‖A⁻¹‖₁`.
    pub fn condition_1(&self, a: &Matrix<N>) -> f64 {
        let mut inv_norm = 0.0_f64;
        for col in 0..N {
            let mut e = [0.0; N];
            e[col] = 1.0;
            let x = self.solve(&e);
            inv_norm = inv_norm.max(x.iter().map(|v| v.abs()).sum());
        }
        norm_1(a) * inv_norm
    }
}

pub fn norm_1<const N: usize>(a: &Matrix<N>) -> f64 {
    (0..N)
        .map(|c| (0..N).map(|r| a[r][c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition estimate for a matrix that may not factor.
pub fn condition_estimate<const N: usize>(a: &Matrix<N>) -> f64 {
    match Lu::factor(a) {
        Ok(lu) => lu.condition_1(a),
        Err(_) => f64::INFINITY,
    }
}

pub fn mat_vec<const N: usize>(a: &Matrix<N>, x: &[f64; N]) -> [f64; N] {
    let mut y = [0.0; N];
    for (yi, row) in y.iter_mut().zip(a.iter()) {
        *yi = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    }
    y
}
