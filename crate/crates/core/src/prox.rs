//! Closed-form proximity operators and projections shared by the joint
//! reconstruction algorithms.

use nalgebra::{Cholesky, DMatrix, Dyn};
use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{check_shape, invalid, Error, Result};
use crate::mel::MelFilterbank;

/// Unit phase factor `psi / |psi|`, or `1` where `psi == 0`.
#[inline]
pub(crate) fn unit_phase(psi: Complex64) -> Complex64 {
    let r = psi.norm();
    if r > 0.0 {
        psi / r
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// `argmin_X 1/2 || |X| - Y ||^2 / rho + 1/2 ||X - Psi||^2`, evaluated as
/// `((Y + rho |Psi|) / (1 + rho)) * Psi / |Psi|`. Bins where `Psi == 0` take
/// zero phase.
pub fn prox_magnitude_fit(psi: &Array2<Complex64>, y: &Array2<f64>, rho: f64) -> Result<Array2<Complex64>> {
    if !(rho >= 0.0) {
        return Err(invalid(format!("rho must be nonnegative, got {rho}")));
    }
    check_shape(psi.dim(), y.dim())?;
    Ok(magnitude_fit(psi, y, rho))
}

pub(crate) fn magnitude_fit(psi: &Array2<Complex64>, y: &Array2<f64>, rho: f64) -> Array2<Complex64> {
    let scale = 1.0 / (1.0 + rho);
    Zip::from(psi)
        .and(y)
        .map_collect(|&p, &target| unit_phase(p) * ((target + rho * p.norm()) * scale))
}

/// Factorization backing `(lambda E^T E + rho I)^{-1}`.
///
/// With fewer mel bands than bins the solve goes through the `B x B` matrix
/// `E E^T + (rho / lambda) I`:
/// `(lambda E^T E + rho I)^{-1} R = (R - E^T (E E^T + rho/lambda I)^{-1} E R) / rho`.
#[derive(Debug, Clone)]
enum MelFitSolver {
    /// `lambda == 0`: the operator is the identity.
    Identity,
    Reduced(Cholesky<f64, Dyn>),
    Full(Cholesky<f64, Dyn>),
}

/// Weights and cached factorization for the mel-fit proximity operator.
#[derive(Debug, Clone)]
pub struct ProxContext<'a> {
    lambda: f64,
    rho: f64,
    filterbank: &'a MelFilterbank,
    solver: MelFitSolver,
}

impl<'a> ProxContext<'a> {
    pub fn new(filterbank: &'a MelFilterbank, lambda: f64, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid(format!("rho must be positive, got {rho}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be nonnegative, got {lambda}")));
        }
        let solver = if lambda == 0.0 {
            MelFitSolver::Identity
        } else {
            let e = filterbank.to_nalgebra();
            let (mels, bins) = e.shape();
            if mels < bins {
                let mut gram = &e * e.transpose();
                for i in 0..mels {
                    gram[(i, i)] += rho / lambda;
                }
                MelFitSolver::Reduced(cholesky(gram)?)
            } else {
                let mut gram = e.transpose() * &e * lambda;
                for i in 0..bins {
                    gram[(i, i)] += rho;
                }
                MelFitSolver::Full(cholesky(gram)?)
            }
        };
        Ok(Self {
            lambda,
            rho,
            filterbank,
            solver,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        self.filterbank
    }

    /// `(lambda E^T E + rho I)^{-1} rhs`, column by column.
    fn solve(&self, rhs: Array2<f64>) -> Array2<f64> {
        match &self.solver {
            MelFitSolver::Identity => rhs / self.rho,
            MelFitSolver::Full(chol) => from_nalgebra(&chol.solve(&to_nalgebra(&rhs))),
            MelFitSolver::Reduced(chol) => {
                let e = self.filterbank.weights();
                let reduced = chol.solve(&to_nalgebra(&e.dot(&rhs)));
                let correction = e.t().dot(&from_nalgebra(&reduced));
                (rhs - correction) / self.rho
            }
        }
    }
}

fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Internal("mel-fit system is not positive definite".into()))
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    let (rows, cols) = a.dim();
    DMatrix::from_fn(rows, cols, |i, j| a[[i, j]])
}

fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn(m.shape(), |(i, j)| m[(i, j)])
}

/// Precomputed `lambda E^T M`, which stays fixed for a whole run.
pub(crate) fn weighted_back_projection(ctx: &ProxContext<'_>, mel: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(ctx.filterbank.apply_transpose(mel)? * ctx.lambda)
}

/// `argmin_W lambda/2 ||E W - M||^2 + rho/2 ||W - Phi||^2
///  = (lambda E^T E + rho I)^{-1} (lambda E^T M + rho Phi)`.
///
/// The result is not clamped; entries may be negative.
pub fn prox_mel_fit(phi: &Array2<f64>, mel: &Array2<f64>, ctx: &ProxContext<'_>) -> Result<Array2<f64>> {
    check_shape((ctx.filterbank.n_bins(), mel.ncols()), phi.dim())?;
    if ctx.lambda == 0.0 {
        return Ok(phi.clone());
    }
    let back = weighted_back_projection(ctx, mel)?;
    Ok(mel_fit(phi, &back, ctx))
}

pub(crate) fn mel_fit(phi: &Array2<f64>, back_projection: &Array2<f64>, ctx: &ProxContext<'_>) -> Array2<f64> {
    if ctx.lambda == 0.0 {
        return phi.clone();
    }
    let rhs = back_projection + &(phi * ctx.rho);
    ctx.solve(rhs)
}

/// `(|X| + rho Upsilon)_+ / (1 + rho)`.
pub fn update_y_joint(x_mag: &Array2<f64>, upsilon: &Array2<f64>, rho: f64) -> Result<Array2<f64>> {
    if !(rho >= 0.0) {
        return Err(invalid(format!("rho must be nonnegative, got {rho}")));
    }
    check_shape(x_mag.dim(), upsilon.dim())?;
    let scale = 1.0 / (1.0 + rho);
    Ok(Zip::from(x_mag)
        .and(upsilon)
        .map_collect(|&a, &u| (a + rho * u).max(0.0) * scale))
}

/// Entrywise `max(., 0)`.
pub fn project_nonneg(y: &Array2<f64>) -> Array2<f64> {
    y.mapv(|v| v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn magnitude_fit_scalar() {
        let psi = array![[Complex64::new(3.0, 4.0)]];
        let out = prox_magnitude_fit(&psi, &array![[10.0]], 1.0).unwrap();
        assert!((out[[0, 0]] - Complex64::new(4.5, 6.0)).norm() < 1e-15);
    }

    #[test]
    fn magnitude_fit_zero_bin_takes_zero_phase() {
        let psi = array![[Complex64::new(0.0, 0.0)]];
        let out = prox_magnitude_fit(&psi, &array![[2.0]], 0.5).unwrap();
        assert_eq!(out[[0, 0]], Complex64::new(2.0 / 1.5, 0.0));
    }

    #[test]
    fn magnitude_fit_rejects_negative_rho() {
        let psi = array![[Complex64::new(1.0, 0.0)]];
        assert!(prox_magnitude_fit(&psi, &array![[1.0]], -0.1).is_err());
    }

    #[test]
    fn mel_fit_with_zero_lambda_is_identity() {
        let fb = MelFilterbank::new(4, 9, 16000, 0.0, 8000.0).unwrap();
        let ctx = ProxContext::new(&fb, 0.0, 0.3).unwrap();
        let phi = Array2::from_shape_fn((9, 2), |(i, j)| i as f64 * 0.1 - j as f64);
        let mel = Array2::from_elem((4, 2), 1.0);
        assert_eq!(prox_mel_fit(&phi, &mel, &ctx).unwrap(), phi);
    }

    #[test]
    fn mel_fit_identity_filterbank_averages() {
        let fb = MelFilterbank::from_matrix(Array2::eye(3), 16000).unwrap();
        let ctx = ProxContext::new(&fb, 0.7, 0.7).unwrap();
        let phi = array![[1.0, -2.0], [0.5, 0.0], [3.0, 1.0]];
        let mel = array![[3.0, 0.0], [0.5, 2.0], [1.0, 1.0]];
        let out = prox_mel_fit(&phi, &mel, &ctx).unwrap();
        let expected = (&phi + &mel) / 2.0;
        assert!((&out - &expected).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn context_rejects_bad_weights() {
        let fb = MelFilterbank::new(4, 9, 16000, 0.0, 8000.0).unwrap();
        assert!(ProxContext::new(&fb, 1.0, 0.0).is_err());
        assert!(ProxContext::new(&fb, -1.0, 0.1).is_err());
    }

    #[test]
    fn y_update_clamps() {
        let out = update_y_joint(&array![[2.0]], &array![[-30.0]], 0.1).unwrap();
        assert_eq!(out[[0, 0]], 0.0);
        let x = array![[1.0, 2.0], [0.0, 4.0]];
        let out = update_y_joint(&x, &x, 0.1).unwrap();
        assert!((&out - &x).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn nonneg_projection() {
        assert_eq!(project_nonneg(&array![[-1.0, 2.0]]), array![[0.0, 2.0]]);
        assert_eq!(project_nonneg(&array![[-1.0, -2.0]]), array![[0.0, 0.0]]);
    }
}
