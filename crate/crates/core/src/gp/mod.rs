//! GP regression with squared-exponential ARD kernels, one independent GP
//! per output dimension over shared training inputs, zero prior mean.

mod fit;
mod io;

pub use fit::{
    fit_gp, fit_hyperparameters, initial_hyper, log_marginal_likelihood,
    log_marginal_likelihood_grad, FitOptions,
};
pub use io::{GpRecord, GPDS_MODEL_SCHEMA_VERSION, GP_SCHEMA_VERSION};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::cholesky_jittered;

/// Hyperparameters of one output dimension: ARD lengthscales (the square
/// roots of the diagonal of Lambda), signal variance and noise variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GpHyper {
    pub fn new(lengthscales: Vec<f64>, signal_var: f64, noise_var: f64) -> Result<Self> {
        let h = Self {
            lengthscales,
            signal_var,
            noise_var,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn isotropic(
        dim: usize,
        lengthscale: f64,
        signal_var: f64,
        noise_var: f64,
    ) -> Result<Self> {
        Self::new(vec![lengthscale; dim], signal_var, noise_var)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if self.lengthscales.is_empty()
            || !self.lengthscales.iter().all(|l| ok(*l))
            || !ok(self.signal_var)
            || !ok(self.noise_var)
        {
            return Err(Error::InvalidArgument(format!(
                "hyperparameters must be strictly positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Diagonal of `Lambda^-1`.
    pub fn inv_sq_lengthscales(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.input_dim(),
            self.lengthscales.iter().map(|l| 1.0 / (l * l)),
        )
    }

    /// `[log l_1 .. log l_d, log sf2, log sn2]`.
    pub fn to_log_params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        p.push(self.signal_var.ln());
        p.push(self.noise_var.ln());
        p
    }

    pub fn from_log_params(p: &[f64]) -> Self {
        let d = p.len() - 2;
        Self {
            lengthscales: p[..d].iter().map(|v| v.exp()).collect(),
            signal_var: p[d].exp(),
            noise_var: p[d + 1].exp(),
        }
    }
}

/// `sf2 * exp(-0.5 (x1 - x2)' Lambda^-1 (x1 - x2))`; noise is never added here.
pub fn kernel_se_ard(x1: &[f64], x2: &[f64], hyper: &GpHyper) -> Result<f64> {
    check_dim(hyper.input_dim(), x1.len())?;
    check_dim(hyper.input_dim(), x2.len())?;
    Ok(se_ard_unchecked(
        x1,
        x2,
        &hyper.lengthscales,
        hyper.signal_var,
    ))
}

#[inline]
pub(crate) fn se_ard_unchecked(
    x1: &[f64],
    x2: &[f64],
    lengthscales: &[f64],
    signal_var: f64,
) -> f64 {
    let mut s = 0.0;
    for ((a, b), l) in x1.iter().zip(x2).zip(lengthscales) {
        let d = (a - b) / l;
        s += d * d;
    }
    signal_var * (-0.5 * s).exp()
}

pub(crate) fn kernel_matrix(inputs: &DMatrix<f64>, hyper: &GpHyper) -> DMatrix<f64> {
    let n = inputs.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| inputs.row(i).iter().copied().collect())
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = se_ard_unchecked(&rows[i], &rows[j], &hyper.lengthscales, hyper.signal_var);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Precomputed quantities for one output dimension.
#[derive(Clone, Debug)]
pub(crate) struct OutputGp {
    pub hyper: GpHyper,
    /// `K_a^-1 y_a` with `K_a` including the noise diagonal.
    pub beta: DVector<f64>,
    /// Lower Cholesky factor of `K_a`.
    pub chol_l: DMatrix<f64>,
    pub k_inv: DMatrix<f64>,
}

/// A trained multi-output GP with shared inputs.
#[derive(Clone, Debug)]
pub struct TrainedGp {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    outputs: Vec<OutputGp>,
    /// Training inputs row-major, for allocation-free kernel loops.
    rows: Vec<f64>,
}

impl TrainedGp {
    /// Factorizes `K_a = K_f + sn2 I` per output dimension and stores
    /// `beta_a` and the Cholesky factors. `inputs` is `n x Din`, `targets`
    /// is `n x Dout`, one hyperparameter set per output column.
    pub fn train(
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        hypers: Vec<GpHyper>,
    ) -> Result<Self> {
        check_dim(inputs.nrows(), targets.nrows())?;
        check_dim(targets.ncols(), hypers.len())?;
        if hypers.is_empty() {
            return Err(Error::InvalidArgument(
                "GP needs at least one output".into(),
            ));
        }
        let din = hypers[0].input_dim();
        check_dim(din, inputs.ncols())?;
        for h in &hypers {
            h.validate()?;
            check_dim(din, h.input_dim())?;
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n = inputs.nrows();
        let mut outputs = Vec::with_capacity(hypers.len());
        for (a, hyper) in hypers.into_iter().enumerate() {
            if n == 0 {
                outputs.push(OutputGp {
                    hyper,
                    beta: DVector::zeros(0),
                    chol_l: DMatrix::zeros(0, 0),
                    k_inv: DMatrix::zeros(0, 0),
                });
                continue;
            }
            let mut k = kernel_matrix(&inputs, &hyper);
            for i in 0..n {
                k[(i, i)] += hyper.noise_var;
            }
            let chol = cholesky_jittered(&k, "GP kernel matrix")?;
            let y = targets.column(a).into_owned();
            let beta = chol.solve(&y);
            let mut k_inv = chol.inverse();
            crate::linalg::symmetrize_in_place(&mut k_inv);
            outputs.push(OutputGp {
                hyper,
                beta,
                chol_l: chol.l(),
                k_inv,
            });
        }
        let rows = (0..n)
            .flat_map(|i| inputs.row(i).iter().copied().collect::<Vec<_>>())
            .collect();
        Ok(Self {
            inputs,
            targets,
            outputs,
            rows,
        })
    }

    /// A GP with no training data; predictions revert to the prior.
    pub fn empty(hypers: Vec<GpHyper>) -> Result<Self> {
        let din = hypers.first().map(|h| h.input_dim()).unwrap_or(0);
        let dout = hypers.len();
        Self::train(DMatrix::zeros(0, din), DMatrix::zeros(0, dout), hypers)
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_train(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn hypers(&self) -> Vec<GpHyper> {
        self.outputs.iter().map(|o| o.hyper.clone()).collect()
    }

    pub fn beta(&self, output: usize) -> &DVector<f64> {
        &self.outputs[output].beta
    }

    pub(crate) fn output(&self, a: usize) -> &OutputGp {
        &self.outputs[a]
    }

    pub(crate) fn train_row(&self, i: usize) -> &[f64] {
        let d = self.input_dim();
        &self.rows[i * d..(i + 1) * d]
    }

    /// Kernel matrix with noise on the diagonal, recomputed from the
    /// hyperparameters (used for residual checks).
    pub fn noisy_kernel_matrix(&self, output: usize) -> DMatrix<f64> {
        let h = &self.outputs[output].hyper;
        let mut k = kernel_matrix(&self.inputs, h);
        for i in 0..self.n_train() {
            k[(i, i)] += h.noise_var;
        }
        k
    }

    /// Predictive mean and variance per output dimension at a deterministic
    /// input. The variance includes the observation noise:
    /// `k** - k*' K^-1 k* + sn2`.
    pub fn predict_point(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_dim(self.input_dim(), x.len())?;
        let mut scratch = PredictScratch::new(self);
        let mut mean = DVector::zeros(self.output_dim());
        let mut var = DVector::zeros(self.output_dim());
        self.predict_into(
            x.as_slice(),
            &mut scratch,
            mean.as_mut_slice(),
            var.as_mut_slice(),
        );
        Ok((mean, var))
    }

    /// Allocation-free point prediction; `x` must have `input_dim` entries.
    pub(crate) fn predict_into(
        &self,
        x: &[f64],
        scratch: &mut PredictScratch,
        mean: &mut [f64],
        var: &mut [f64],
    ) {
        let n = self.n_train();
        for (a, out) in self.outputs.iter().enumerate() {
            let h = &out.hyper;
            let ks = &mut scratch.k_star;
            for i in 0..n {
                ks[i] = se_ard_unchecked(self.train_row(i), x, &h.lengthscales, h.signal_var);
            }
            mean[a] = (0..n).map(|i| ks[i] * out.beta[i]).sum();
            // forward substitution L v = k*
            let v = &mut scratch.v;
            for i in 0..n {
                let mut s = ks[i];
                for j in 0..i {
                    s -= out.chol_l[(i, j)] * v[j];
                }
                v[i] = s / out.chol_l[(i, i)];
            }
            let explained: f64 = v[..n].iter().map(|t| t * t).sum();
            var[a] = (h.signal_var - explained).max(0.0) + h.noise_var;
        }
    }

    /// Jacobian of the posterior mean at `x`, `Dout x Din`:
    /// row `a` is `sum_i beta_ai k_a(x_i, x) Lambda_a^-1 (x_i - x)`.
    pub fn mean_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let d = self.input_dim();
        let mut jac = DMatrix::zeros(self.output_dim(), d);
        for (a, out) in self.outputs.iter().enumerate() {
            let h = &out.hyper;
            let inv_l2 = h.inv_sq_lengthscales();
            for i in 0..self.n_train() {
                let xi = self.train_row(i);
                let w =
                    out.beta[i] * se_ard_unchecked(xi, x.as_slice(), &h.lengthscales, h.signal_var);
                for k in 0..d {
                    jac[(a, k)] += w * inv_l2[k] * (xi[k] - x[k]);
                }
            }
        }
        Ok(jac)
    }
}

pub(crate) struct PredictScratch {
    k_star: Vec<f64>,
    v: Vec<f64>,
}

impl PredictScratch {
    pub(crate) fn new(gp: &TrainedGp) -> Self {
        Self {
            k_star: vec![0.0; gp.n_train()],
            v: vec![0.0; gp.n_train()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h1(l: f64, sf2: f64, sn2: f64) -> GpHyper {
        GpHyper::new(vec![l], sf2, sn2).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let h = h1(1.0, 1.7, 0.1);
        assert!((kernel_se_ard(&[0.4], &[0.4], &h).unwrap() - 1.7).abs() < 1e-15);
        let h = h1(1.0, 1.0, 0.1);
        let v = kernel_se_ard(&[0.0], &[2f64.sqrt()], &h).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        // Lambda = diag(1, 4): lengthscales (1, 2); d = (1, 2) -> 1 + 1 = 2.
        let h = GpHyper::new(vec![1.0, 2.0], 2.0, 0.1).unwrap();
        let v = kernel_se_ard(&[1.0, 2.0], &[0.0, 0.0], &h).unwrap();
        assert!((v - 2.0 * (-1f64).exp()).abs() < 1e-15);
        assert!(matches!(
            kernel_se_ard(&[1.0], &[0.0, 0.0], &h),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hyper_rejects_non_positive() {
        assert!(GpHyper::new(vec![0.0], 1.0, 1.0).is_err());
        assert!(GpHyper::new(vec![1.0], -1.0, 1.0).is_err());
        assert!(GpHyper::new(vec![1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn empty_gp_reverts_to_prior() {
        let gp = TrainedGp::empty(vec![h1(1.0, 2.0, 0.5)]).unwrap();
        let (m, v) = gp.predict_point(&DVector::from_element(1, 3.0)).unwrap();
        assert_eq!(m[0], 0.0);
        assert!((v[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn single_point_hand_solve() {
        let gp = TrainedGp::train(
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 2.0),
            vec![h1(1.0, 1.0, 1.0)],
        )
        .unwrap();
        assert!((gp.noisy_kernel_matrix(0)[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((gp.beta(0)[0] - 1.0).abs() < 1e-15);
        let (m, v) = gp.predict_point(&DVector::from_element(1, 0.0)).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-14);
        assert!((v[0] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn far_input_reverts_to_prior() {
        let x = DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 1.0]);
        let y = DMatrix::from_column_slice(3, 1, &[0.5, -0.2, 0.9]);
        let gp = TrainedGp::train(x, y, vec![h1(0.5, 1.3, 0.01)]).unwrap();
        let (m, v) = gp.predict_point(&DVector::from_element(1, 12.0)).unwrap();
        assert!(m[0].abs() < 1e-10);
        assert!((v[0] - 1.31).abs() < 1e-10);
    }

    #[test]
    fn mean_jacobian_matches_finite_differences() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.1, 1.0, -0.5, -0.7, 0.3, 0.2, 0.9]);
        let y = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -0.3, 0.4, 0.8, 0.2, 0.1, -0.6]);
        let hyp = vec![
            GpHyper::new(vec![0.8, 1.1], 1.0, 0.01).unwrap(),
            GpHyper::new(vec![0.6, 0.7], 0.5, 0.02).unwrap(),
        ];
        let gp = TrainedGp::train(x, y, hyp).unwrap();
        let at = DVector::from_vec(vec![0.3, 0.2]);
        let jac = gp.mean_jacobian(&at).unwrap();
        let eps = 1e-5;
        for k in 0..2 {
            let mut p = at.clone();
            let mut m = at.clone();
            p[k] += eps;
            m[k] -= eps;
            let fd =
                (gp.predict_point(&p).unwrap().0 - gp.predict_point(&m).unwrap().0) / (2.0 * eps);
            for a in 0..2 {
                assert!(
                    (fd[a] - jac[(a, k)]).abs() < 1e-8,
                    "{} vs {}",
                    fd[a],
                    jac[(a, k)]
                );
            }
        }
    }
}
