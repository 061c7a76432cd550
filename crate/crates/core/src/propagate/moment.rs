//! Exact moment matching for SE-ARD GPs under a Gaussian input.
//!
//! Mean by iterated expectations:
//!   `mu_a = q_a' beta_a`,
//!   `q_ai = sf2_a |Sigma Lambda_a^-1 + I|^-1/2 exp(-0.5 nu_i' (Sigma + Lambda_a)^-1 nu_i)`,
//!   `nu_i = x_i - mu`.
//! Covariance by iterated variances:
//!   `E[f_a f_b] = beta_a' Q beta_b`,
//!   `Q_ij = k_a(x_i, mu) k_b(x_j, mu) |R|^-1/2 exp(0.5 z_ij' R^-1 Sigma z_ij)`,
//!   `R = Sigma (Lambda_a^-1 + Lambda_b^-1) + I`,
//!   `z_ij = Lambda_a^-1 nu_i + Lambda_b^-1 nu_j`,
//! with `sf2_a - tr(K_a^-1 Q) + sn2_a` added on the diagonal.
//! Cross-covariance:
//!   `cov[x, f_a] = sum_i beta_ai q_ai Sigma (Sigma + Lambda_a)^-1 nu_i`.

use nalgebra::{DMatrix, DVector};

use super::{augment, AugmentedInput, UncertainPrediction};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::gp::TrainedGp;
use crate::linalg::{cholesky_jittered, log_det, symmetrize_in_place};

pub fn predict_moment_matched(gp: &TrainedGp, input: &Gaussian) -> Result<UncertainPrediction> {
    if !input.is_positive_definite() {
        return Err(Error::NonPositiveDefinite(
            "moment matching input covariance",
        ));
    }
    moment_matched_augmented(gp, &augment(gp, input, None)?)
}

/// Per-output intermediate quantities.
struct OutputTerms {
    /// `Lambda_a^-1 nu_i` as rows, `n x d`.
    scaled_nu: DMatrix<f64>,
    /// `log k_a(x_i, mu)`.
    log_k: DVector<f64>,
}

pub(crate) fn moment_matched_augmented(
    gp: &TrainedGp,
    inp: &AugmentedInput,
) -> Result<UncertainPrediction> {
    let (n, d, e, ds) = (gp.n_train(), gp.input_dim(), gp.output_dim(), inp.state_dim);
    let sigma = &inp.cov;
    let mu = &inp.mean;

    let mut nu = DMatrix::zeros(n, d);
    for i in 0..n {
        let xi = gp.train_row(i);
        for k in 0..d {
            nu[(i, k)] = xi[k] - mu[k];
        }
    }

    let mut mean = DVector::zeros(e);
    let mut cross_cov = DMatrix::zeros(ds, e);
    let mut jacobian = DMatrix::zeros(e, ds);
    let mut terms = Vec::with_capacity(e);

    for a in 0..e {
        let out = gp.output(a);
        let h = &out.hyper;
        let inv_l2 = h.inv_sq_lengthscales();
        // (Sigma + Lambda_a)
        let mut s_plus_l = sigma.clone();
        for k in 0..d {
            s_plus_l[(k, k)] += h.lengthscales[k] * h.lengthscales[k];
        }
        let chol = cholesky_jittered(&s_plus_l, "Sigma + Lambda")?;
        // |Sigma Lambda^-1 + I| = |Sigma + Lambda| / |Lambda|
        let log_det_lambda: f64 = h.lengthscales.iter().map(|l| 2.0 * l.ln()).sum();
        let log_scale = h.signal_var.ln() - 0.5 * (log_det(&chol) - log_det_lambda);

        let mut scaled_nu = DMatrix::zeros(n, d);
        let mut log_k = DVector::zeros(n);
        let mut g = DVector::zeros(d);
        for i in 0..n {
            let nu_i = nu.row(i).transpose();
            let b_nu = chol.solve(&nu_i);
            let q = (log_scale - 0.5 * nu_i.dot(&b_nu)).exp();
            mean[a] += q * out.beta[i];
            g.axpy(out.beta[i] * q, &b_nu, 1.0);
            let mut maha = 0.0;
            for k in 0..d {
                scaled_nu[(i, k)] = inv_l2[k] * nu_i[k];
                maha += nu_i[k] * nu_i[k] * inv_l2[k];
            }
            log_k[i] = h.signal_var.ln() - 0.5 * maha;
        }
        // d mu_a / d mu is g; cov[x, f_a] = Sigma g restricted to the state block.
        let c = sigma * &g;
        for k in 0..ds {
            jacobian[(a, k)] = g[k];
            cross_cov[(k, a)] = c[k];
        }
        terms.push(OutputTerms { scaled_nu, log_k });
    }

    let mut cov = DMatrix::zeros(e, e);
    for a in 0..e {
        for b in 0..=a {
            let q = q_matrix(gp, sigma, &terms[a], &terms[b], a, b)?;
            let ba = &gp.output(a).beta;
            let bb = &gp.output(b).beta;
            let mut v = ba.dot(&(&q * bb)) - mean[a] * mean[b];
            if a == b {
                let out = gp.output(a);
                let tr = out.k_inv.component_mul(&q).sum();
                v += out.hyper.signal_var - tr + out.hyper.noise_var;
            }
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    symmetrize_in_place(&mut cov);
    Ok(UncertainPrediction {
        mean,
        cov,
        cross_cov,
        jacobian,
    })
}

fn q_matrix(
    gp: &TrainedGp,
    sigma: &DMatrix<f64>,
    ta: &OutputTerms,
    tb: &OutputTerms,
    a: usize,
    b: usize,
) -> Result<DMatrix<f64>> {
    let n = gp.n_train();
    let d = gp.input_dim();
    let ia = gp.output(a).hyper.inv_sq_lengthscales();
    let ib = gp.output(b).hyper.inv_sq_lengthscales();
    let mut r = sigma.clone();
    for k in 0..d {
        for row in 0..d {
            r[(row, k)] = sigma[(row, k)] * (ia[k] + ib[k]);
        }
        r[(k, k)] += 1.0;
    }
    let lu = r.clone().lu();
    let det = lu.determinant();
    if !(det > 0.0) {
        return Err(Error::CholeskyFailure("|R| in moment matching"));
    }
    let mut m = lu
        .solve(sigma)
        .ok_or(Error::CholeskyFailure("R^-1 Sigma"))?;
    symmetrize_in_place(&mut m);
    let half_log_det = 0.5 * det.ln();

    // z_ij' M z_ij = a_i' M a_i + b_j' M b_j + 2 a_i' M b_j
    let am = &ta.scaled_nu * &m;
    let cross = &am * tb.scaled_nu.transpose();
    let sa = DVector::from_iterator(n, (0..n).map(|i| am.row(i).dot(&ta.scaled_nu.row(i))));
    let bm = &tb.scaled_nu * &m;
    let sb = DVector::from_iterator(n, (0..n).map(|j| bm.row(j).dot(&tb.scaled_nu.row(j))));

    let mut q = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let expo = ta.log_k[i] + tb.log_k[j] - half_log_det
                + 0.5 * (sa[i] + sb[j] + 2.0 * cross[(i, j)]);
            q[(i, j)] = expo.exp();
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpHyper;

    fn one_point_gp(l: f64, sf2: f64, sn2: f64) -> TrainedGp {
        TrainedGp::train(
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 2.0),
            vec![GpHyper::new(vec![l], sf2, sn2).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn one_training_point_closed_form() {
        let (l, sf2, sn2) = (0.8, 1.5, 0.2);
        let gp = one_point_gp(l, sf2, sn2);
        let beta = gp.beta(0)[0];
        let (mu, s) = (0.4, 0.3);
        let p = predict_moment_matched(&gp, &Gaussian::scalar(mu, s).unwrap()).unwrap();
        let l2 = l * l;
        let q = sf2 / (s / l2 + 1.0).sqrt() * (-0.5 * mu * mu / (s + l2)).exp();
        assert!((p.mean[0] - beta * q).abs() < 1e-12);
        // cross-cov = beta q s (s + l2)^-1 (0 - mu)
        let c = beta * q * s / (s + l2) * (0.0 - mu);
        assert!((p.cross_cov[(0, 0)] - c).abs() < 1e-12);
        // second moment: Q = k(0, mu)^2 |R|^-1/2 exp(0.5 z^2 s / R), R = 2 s / l2 + 1
        let k = sf2 * (-0.5 * mu * mu / l2).exp();
        let r = 2.0 * s / l2 + 1.0;
        let z = -2.0 * mu / l2;
        let big_q = k * k / r.sqrt() * (0.5 * z * z * s / r).exp();
        let kinv = 1.0 / (sf2 + sn2);
        let var = beta * beta * big_q - (beta * q).powi(2) + sf2 - kinv * big_q + sn2;
        assert!(
            (p.cov[(0, 0)] - var).abs() < 1e-12,
            "{} vs {var}",
            p.cov[(0, 0)]
        );
    }

    #[test]
    fn narrow_input_matches_point_prediction() {
        let x = DMatrix::from_column_slice(4, 1, &[-1.0, -0.3, 0.5, 1.2]);
        let y = DMatrix::from_column_slice(4, 1, &[0.2, -0.4, 0.9, 0.1]);
        let gp = TrainedGp::train(x, y, vec![GpHyper::new(vec![0.7], 1.1, 0.05).unwrap()]).unwrap();
        let at = DVector::from_element(1, 0.1);
        let (m, v) = gp.predict_point(&at).unwrap();
        let p = predict_moment_matched(
            &gp,
            &Gaussian::new(at.clone(), DMatrix::from_element(1, 1, 1e-10)).unwrap(),
        )
        .unwrap();
        assert!((p.mean[0] - m[0]).abs() < 1e-8);
        assert!((p.cov[(0, 0)] - v[0]).abs() < 1e-6);
        let jac = gp.mean_jacobian(&at).unwrap();
        assert!((p.jacobian[(0, 0)] - jac[(0, 0)]).abs() < 1e-6);
    }

    #[test]
    fn empty_gp_gives_the_prior() {
        let gp = TrainedGp::empty(vec![GpHyper::new(vec![1.0], 2.0, 0.5).unwrap()]).unwrap();
        let p = predict_moment_matched(&gp, &Gaussian::scalar(3.0, 0.7).unwrap()).unwrap();
        assert_eq!(p.mean[0], 0.0);
        assert!((p.cov[(0, 0)] - 2.5).abs() < 1e-14);
        assert_eq!(p.cross_cov[(0, 0)], 0.0);
    }

    #[test]
    fn rejects_indefinite_input() {
        let gp = one_point_gp(1.0, 1.0, 0.1);
        let g = Gaussian::scalar(0.0, -1.0).unwrap();
        assert!(matches!(
            predict_moment_matched(&gp, &g),
            Err(Error::NonPositiveDefinite(_))
        ));
    }
}
