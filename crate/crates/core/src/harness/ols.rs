//! Least-squares predictor on (1, x_j, x_j²) features.

use nalgebra::{DMatrix, DVector};

use crate::error::{DacsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOls {
    coef: Vec<f64>,
}

fn features(x: &[f64]) -> impl Iterator<Item = f64> + '_ {
    std::iter::once(1.0).chain(x.iter().flat_map(|&v| [v, v * v]))
}

impl QuadraticOls {
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let p = x.first().map_or(0, |r| 1 + 2 * r.len());
        if x.len() < p || x.len() != y.len() {
            return Err(DacsError::InvalidParameter("too few training rows for least squares".into()));
        }
        let design = DMatrix::from_row_iterator(x.len(), p, x.iter().flat_map(|r| features(r)));
        let rhs = DVector::from_column_slice(y);
        let coef = design
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| DacsError::InvalidParameter(format!("least squares failed: {e}")))?;
        Ok(QuadraticOls { coef: coef.iter().copied().collect() })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        features(x).zip(&self.coef).map(|(f, c)| f * c).sum()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_quadratic() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.3 - 2.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.5 - 2.0 * r[0] + 0.5 * r[0] * r[0]).collect();
        let fit = QuadraticOls::fit(&x, &y).unwrap();
        for (c, e) in fit.coefficients().iter().zip([1.5, -2.0, 0.5]) {
            assert!((c - e).abs() < 1e-9);
        }
        assert!((fit.predict(&[1.0]) - 0.0).abs() < 1e-9);
    }
}
