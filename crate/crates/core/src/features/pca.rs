//! Principal component analysis via eigendecomposition of the sample
//! covariance matrix.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Default number of retained social components.
pub const DEFAULT_COMPONENTS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k×d, one principal axis per row.
    pub components: Matrix,
    /// Sample variance (n − 1 denominator) along each axis, descending.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    /// `components · (v − mean)`.
    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "PCA input of length {}, model expects {}",
                v.len(),
                self.mean.len()
            )));
        }
        let centred: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        crate::nn::matrix::matvec(&self.components, &centred)
    }

    /// Maps a projection back to input space.
    pub fn inverse_transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut v = crate::nn::matrix::vecmat(z, &self.components)?;
        v.iter_mut().zip(&self.mean).for_each(|(x, m)| *x += m);
        Ok(v)
    }
}

/// Fits `k` components to the rows of `data` (n×d). Requires n ≥ 2 and
/// 1 ≤ k ≤ min(n − 1, d).
pub fn fit_pca(data: &Matrix, k: usize) -> Result<PcaModel> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::InvalidArgument(format!(
            "PCA with {k} components on {n}x{d} data (max {})",
            (n - 1).min(d)
        )));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, x) in mean.iter_mut().zip(data.row(r)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in 0..n {
        let c: Vec<f64> = data.row(r).iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let axis = eig.eigenvectors.column(idx);
        // sign convention: largest-magnitude entry positive
        let pivot = (0..d)
            .max_by(|&a, &b| axis[a].abs().total_cmp(&axis[b].abs()))
            .unwrap_or(0);
        let sign = if axis[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(row, j)] = sign * axis[j];
        }
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_line() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let m = fit_pca(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        let s5 = 5f64.sqrt();
        assert!((m.components[(0, 0)] - 1.0 / s5).abs() < 1e-10);
        assert!((m.components[(0, 1)] - 2.0 / s5).abs() < 1e-10);
        assert!(m.explained_variance[1].abs() < 1e-10);
    }

    #[test]
    fn mean_maps_to_zero() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| vec![i as f64, (i * i) as f64, 1.0 - i as f64])
            .collect();
        let m = fit_pca(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        let z = m.transform(&m.mean).unwrap();
        assert!(z.iter().all(|x| x.abs() < 1e-12));
        assert!(m.transform(&[1.0]).is_err());
    }

    #[test]
    fn k_out_of_range() {
        let data = Matrix::zeros(3, 5);
        assert!(fit_pca(&data, 3).is_err());
        assert!(fit_pca(&data, 0).is_err());
        assert!(fit_pca(&Matrix::zeros(1, 5), 1).is_err());
    }

    #[test]
    fn identical_rows_have_zero_variance() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 4];
        let m = fit_pca(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        assert!(m.explained_variance.iter().all(|&v| v == 0.0));
        for i in 0..2 {
            let n: f64 = m.components.row(i).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-10);
        }
    }
}
