//! Multivariate-normal measurement models: likelihood, score and Fisher
//! information from a mean vector, a covariance matrix and their parameter
//! derivatives.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Jitter added to the covariance before factorization, relative to its mean
/// diagonal.
pub const COVARIANCE_JITTER: f64 = 1e-10;

/// Relative central-difference step for parameter derivatives.
pub const RELATIVE_STEP: f64 = 1e-5;

/// Admissible range of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Free,
    /// Must stay strictly above zero.
    Positive,
    /// May reach zero, where it is pinned.
    NonNegative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// ∂μ/∂θ (one column per parameter) and ∂C/∂θ (one matrix per parameter).
/// Entries for inactive parameters are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamJacobians {
    pub mean: DMatrix<f64>,
    pub cov: Vec<DMatrix<f64>>,
}

/// A model whose data vector is normally distributed with parameter
/// dependent mean and covariance.
pub trait GaussianModel: Sync {
    fn data_len(&self) -> usize;

    fn param_count(&self) -> usize;

    fn param_name(&self, index: usize) -> &'static str;

    fn bound(&self, _index: usize) -> Bound {
        Bound::Free
    }

    fn moments(&self, theta: &[f64]) -> Result<Moments>;

    /// Central differences with step `RELATIVE_STEP·|θ_k|` for every active
    /// parameter.
    fn jacobians(&self, theta: &[f64], active: &[bool]) -> Result<ParamJacobians> {
        let (m, p) = (self.data_len(), self.param_count());
        let mut mean = DMatrix::zeros(m, p);
        let mut cov = vec![DMatrix::zeros(m, m); p];
        for k in (0..p).filter(|&k| active[k]) {
            let h = fd_step(theta[k], self.param_name(k))?;
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[k] += h;
            minus[k] -= h;
            let (hi, lo) = (self.moments(&plus)?, self.moments(&minus)?);
            mean.set_column(k, &((hi.mean - lo.mean) / (2.0 * h)));
            cov[k] = (hi.cov - lo.cov) / (2.0 * h);
        }
        Ok(ParamJacobians { mean, cov })
    }
}

pub(crate) fn fd_step(value: f64, name: &'static str) -> Result<f64> {
    let h = RELATIVE_STEP * value.abs();
    if !(h.is_normal() && (value + h) != value && (value - h) != value) {
        return Err(Error::StepUnderflow(name));
    }
    Ok(h)
}

/// Cholesky factor of a jittered covariance.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    jitter: f64,
}

impl GaussianFactor {
    /// Adds `COVARIANCE_JITTER × mean diagonal` and factorizes.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let jitter = jitter_for(cov);
        let mut conditioned = cov.clone();
        for i in 0..conditioned.nrows() {
            conditioned[(i, i)] += jitter;
        }
        let chol = Cholesky::new(conditioned).ok_or(Error::NotPositiveDefinite)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { chol, log_det, jitter })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// L⁻¹·v
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().solve_lower_triangular(v).expect("Cholesky factor has a positive diagonal")
    }

    /// Inverse of the conditioned covariance, as L⁻ᵀL⁻¹.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.chol.l_dirty().nrows();
        let l_inv = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("Cholesky factor has a positive diagonal");
        let mut inv = l_inv.tr_mul(&l_inv);
        symmetrize(&mut inv);
        inv
    }

    pub fn log_density(&self, residual: &DVector<f64>) -> f64 {
        let z = self.whiten(residual);
        -0.5 * (z.norm_squared() + self.log_det + residual.len() as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

fn jitter_for(cov: &DMatrix<f64>) -> f64 {
    COVARIANCE_JITTER * cov.diagonal().mean()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Mean, factorized covariance and (optionally) derivatives at one θ.
#[derive(Debug, Clone)]
pub struct ModelPoint {
    pub theta: Vec<f64>,
    pub mean: DVector<f64>,
    pub factor: GaussianFactor,
    pub jacobians: Option<ParamJacobians>,
    pub active: Vec<bool>,
}

impl ModelPoint {
    pub fn new<M: GaussianModel + ?Sized>(model: &M, theta: &[f64], active: Option<&[bool]>) -> Result<Self> {
        let Moments { mean, cov } = model.moments(theta)?;
        let factor = GaussianFactor::new(&cov)?;
        let (jacobians, active) = match active {
            Some(active) => {
                let mut jac = model.jacobians(theta, active)?;
                // the jitter is part of the conditioned covariance
                for dc in jac.cov.iter_mut() {
                    let dj = jitter_for(dc);
                    for i in 0..dc.nrows() {
                        dc[(i, i)] += dj;
                    }
                }
                (Some(jac), active.to_vec())
            }
            None => (None, vec![false; theta.len()]),
        };
        Ok(Self {
            theta: theta.to_vec(),
            mean,
            factor,
            jacobians,
            active,
        })
    }

    pub fn log_likelihood(&self, data: &DVector<f64>) -> f64 {
        self.factor.log_density(&(data - &self.mean))
    }

    fn jac(&self) -> &ParamJacobians {
        self.jacobians.as_ref().expect("model point built without derivatives")
    }

    /// Fisher information split into the mean and covariance terms.
    pub fn fisher(&self) -> FisherInformation {
        self.fisher_from(&self.factor.inverse())
    }

    /// ∂ ln p(x|θ)/∂θ.
    pub fn score(&self, data: &DVector<f64>) -> DVector<f64> {
        self.score_from(&self.factor.inverse(), data)
    }

    /// Fisher information and score sharing one covariance inverse.
    pub fn fisher_and_score(&self, data: &DVector<f64>) -> (FisherInformation, DVector<f64>) {
        let inverse = self.factor.inverse();
        (self.fisher_from(&inverse), self.score_from(&inverse, data))
    }

    fn fisher_from(&self, inverse: &DMatrix<f64>) -> FisherInformation {
        let jac = self.jac();
        let p = self.theta.len();
        let weighted_mean = inverse * &jac.mean;
        // C⁻¹∂C_k
        let products: Vec<Option<DMatrix<f64>>> = (0..p)
            .map(|k| self.active[k].then(|| inverse * &jac.cov[k]))
            .collect();
        let mut mean_part = DMatrix::zeros(p, p);
        let mut cov_part = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = jac.mean.column(i).dot(&weighted_mean.column(j));
                mean_part[(i, j)] = v;
                mean_part[(j, i)] = v;
                if let (Some(xi), Some(xj)) = (&products[i], &products[j]) {
                    // Tr(XᵢXⱼ) without forming the product
                    let v = 0.5 * xi.dot(&xj.transpose());
                    cov_part[(i, j)] = v;
                    cov_part[(j, i)] = v;
                }
            }
        }
        FisherInformation {
            total: &mean_part + &cov_part,
            mean_part,
            cov_part,
        }
    }

    fn score_from(&self, inverse: &DMatrix<f64>, data: &DVector<f64>) -> DVector<f64> {
        let jac = self.jac();
        let w = self.factor.solve(&(data - &self.mean));
        DVector::from_fn(self.theta.len(), |k, _| {
            if !self.active[k] {
                return 0.0;
            }
            let dc = &jac.cov[k];
            // both symmetric, so Tr(C⁻¹∂C) is the Frobenius product
            let trace = inverse.dot(dc);
            jac.mean.column(k).dot(&w) + 0.5 * w.dot(&(dc * &w)) - 0.5 * trace
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherInformation {
    pub total: DMatrix<f64>,
    /// (∂μ)ᵀC⁻¹(∂μ)
    pub mean_part: DMatrix<f64>,
    /// ½Tr[C⁻¹∂C C⁻¹∂C]
    pub cov_part: DMatrix<f64>,
}

/// Inverse of a symmetric positive-definite matrix after Jacobi scaling, so
/// that parameters of very different magnitude do not spoil conditioning.
pub fn scaled_inverse(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = matrix.nrows();
    let d: Vec<f64> = (0..p).map(|k| matrix[(k, k)]).collect();
    if d.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::SingularFisher);
    }
    let s = DVector::from_iterator(p, d.iter().map(|v| 1.0 / v.sqrt()));
    let scaled = DMatrix::from_fn(p, p, |i, j| matrix[(i, j)] * s[i] * s[j]);
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.max();
    if eig.eigenvalues.min() <= 1e-12 * max {
        return Err(Error::SingularFisher);
    }
    let inv_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let inv = &eig.eigenvectors * inv_vals * eig.eigenvectors.transpose();
    Ok(DMatrix::from_fn(p, p, |i, j| inv[(i, j)] * s[i] * s[j]))
}
