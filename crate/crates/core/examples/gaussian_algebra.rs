//! Products, quotients and natural parameters of Gaussians.

use gpds_ep::{divide, log_pdf, multiply, Gaussian, NaturalGaussian};
use nalgebra::{DMatrix, DVector};

fn main() -> gpds_ep::Result<()> {
    let a = Gaussian::new(
        DVector::from_column_slice(&[1.0, -0.5]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
    )?;
    let b = Gaussian::diagonal(&[0.0, 0.0], &[2.0, 2.0])?;

    let ab = multiply(&a, &b)?;
    println!("product mean {:?}", ab.mean().as_slice());
    println!("log of the normalizer: {:.6}", ab.log_scale());

    // the quotient is kept in natural form since it may be indefinite
    let back = divide(&ab, &b.to_natural()?)?.to_moments()?;
    println!("(a * b) / b mean {:?}", back.mean().as_slice());

    // dividing by a wider Gaussian than the numerator is not proper
    let wide = Gaussian::diagonal(&[0.0, 0.0], &[0.1, 0.1])?;
    let q = divide(&b, &wide.to_natural()?)?;
    println!("b / narrow is proper: {}", q.is_proper());

    let unit = NaturalGaussian::unit(2);
    let same = a.to_natural()?.product(&unit)?.to_moments()?;
    println!("a times the unit message: {:?}", same.mean().as_slice());

    let x = DVector::from_column_slice(&[0.5, 0.0]);
    println!("log N(x | a) = {:.6}", log_pdf(&a, &x)?);
    Ok(())
}
