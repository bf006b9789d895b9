//! Small dense matrix helpers. Matrices are row-major `Vec<Vec<f64>>`; the
//! chains handled here are at most a handful of states, so nothing fancier is
//! warranted.

pub type Matrix = Vec<Vec<f64>>;

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    vec![vec![0.0; cols]; rows]
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Matrix {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖a − b‖∞`.
pub fn inf_norm_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorisation `PA = LU` with partial (row) pivoting. `L` has a unit
/// diagonal and is stored below the diagonal of `lu`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    /// Returns `None` when a pivot vanishes relative to the scale of `a`.
    pub fn factor(a: &[Vec<f64>]) -> Option<Lu> {
        let n = a.len();
        let mut lu: Matrix = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        let tiny = f64::EPSILON * scale * n as f64;

        for col in 0..n {
            let (pivot_row, pivot_abs) =
                (col..n)
                    .map(|r| (r, lu[r][col].abs()))
                    .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs.is_nan() || pivot_abs <= tiny {
                return None;
            }
            if pivot_row != col {
                lu.swap(pivot_row, col);
                perm.swap(pivot_row, col);
            }
            let pivot = lu[col][col];
            let (upper, lower) = lu.split_at_mut(col + 1);
            let top = &upper[col];
            for row in lower.iter_mut() {
                let factor = row[col] / pivot;
                row[col] = factor;
                if factor != 0.0 {
                    for (x, p) in row[col + 1..].iter_mut().zip(&top[col + 1..]) {
                        *x -= factor * p;
                    }
                }
            }
        }
        Some(Lu { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i][j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i][j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i][i];
        }
        x
    }

    /// Solve `A X = B` column by column.
    pub fn solve_matrix(&self, b: &[Vec<f64>]) -> Matrix {
        let n = self.lu.len();
        let cols = b.first().map_or(0, Vec::len);
        let mut out = zeros(n, cols);
        for j in 0..cols {
            let column: Vec<f64> = b.iter().map(|row| row[j]).collect();
            for (i, v) in self.solve(&column).into_iter().enumerate() {
                out[i][j] = v;
            }
        }
        out
    }
}
