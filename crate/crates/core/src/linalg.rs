//! Small dense symmetric solves shared by the estimator and the Fisher
//! information evaluation.

use nalgebra::{Cholesky, Matrix6, Vector6, U6};

/// Cholesky factor of `D⁻¹ M D⁻¹` with `D = sqrt(diag M)`.
///
/// Equilibration keeps the factorization accurate when the regressor columns
/// differ by many orders of magnitude (second derivatives of voltage versus the
/// constant column). Columns whose scale is negligible relative to the largest
/// one keep the largest scale, so they stay negligible after scaling.
pub(crate) struct Equilibrated {
    chol: Cholesky<f64, U6>,
    scale: Vector6<f64>,
    ridged: bool,
}

const NEGLIGIBLE_COLUMN: f64 = 1e-12;

fn scales(m: &Matrix6<f64>) -> Vector6<f64> {
    let raw = m.diagonal().map(|d| d.max(0.0).sqrt());
    let max = raw.max();
    if max <= 0.0 {
        return Vector6::repeat(1.0);
    }
    raw.map(|d| if d <= NEGLIGIBLE_COLUMN * max { max } else { d })
}

fn scaled(m: &Matrix6<f64>, scale: &Vector6<f64>) -> Matrix6<f64> {
    Matrix6::from_fn(|i, j| m[(i, j)] / (scale[i] * scale[j]))
}

fn min_pivot_sq(chol: &Cholesky<f64, U6>) -> f64 {
    chol.l_dirty().diagonal().map(|x| x * x).min()
}

impl Equilibrated {
    /// Factors `m` as is; `None` if it is not numerically positive definite.
    pub(crate) fn factor(m: &Matrix6<f64>) -> Option<Self> {
        let scale = scales(m);
        let chol = Cholesky::new(scaled(m, &scale))?;
        Some(Self {
            chol,
            scale,
            ridged: false,
        })
    }

    /// Factors `m`, adding `ridge·I` to the equilibrated matrix when a pivot
    /// falls below `ridge` or the plain factorization fails.
    pub(crate) fn factor_with_ridge(m: &Matrix6<f64>, ridge: f64) -> Option<Self> {
        let scale = scales(m);
        let eq = scaled(m, &scale);
        if let Some(chol) = Cholesky::new(eq) {
            if min_pivot_sq(&chol) >= ridge {
                return Some(Self {
                    chol,
                    scale,
                    ridged: false,
                });
            }
        }
        let chol = Cholesky::new(eq + Matrix6::identity() * ridge)?;
        Some(Self {
            chol,
            scale,
            ridged: true,
        })
    }

    pub(crate) fn ridged(&self) -> bool {
        self.ridged
    }

    /// Solves the (possibly ridged) system `M x = b`.
    pub(crate) fn solve(&self, b: &Vector6<f64>) -> Vector6<f64> {
        let scaled_b = b.component_div(&self.scale);
        self.chol.solve(&scaled_b).component_div(&self.scale)
    }
}

/// Ratio of extreme eigenvalues of a symmetric matrix.
pub(crate) fn condition_number(m: &Matrix6<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(*m);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
